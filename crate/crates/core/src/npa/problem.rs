//! Moment-matrix assembly: from a monomial basis, behavior pins, an
//! objective over moments and operator-norm bounds to a solver-ready conic
//! program, with enough structure retained to read dual certificates back.

use super::basis::{build_basis, BasisSpec};
use super::solver::{AffineRow, ConicProgram, PsdBlockSpec, SolverSolution};
use super::symbol::{Moment, Monomial};
use crate::correlations::{Behavior, N_X, N_Y};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("behavior constraints for setting (x={x},y={y}) sum to {sum}, expected 1")]
    PinsNotNormalized { x: usize, y: usize, sum: f64 },
    #[error("pinned value P({a},{b}|{x},{y}) = {value} outside [0,1]")]
    PinOutOfRange { a: usize, b: usize, x: usize, y: usize, value: f64 },
    #[error("pins are signaling: marginal of {party} input {input} varies by {spread:.3e} (tolerance {tol:.1e}); project the data first")]
    Signaling { party: &'static str, input: usize, spread: f64, tol: f64 },
    #[error("constraint set references setting (x={x},y={y}) outside the scenario")]
    BadSetting { x: usize, y: usize },
    #[error("incomplete constraint set: setting (x={x},y={y}) is only partially pinned")]
    Incomplete { x: usize, y: usize },
}

/// Linear functional over moments plus a constant.
#[derive(Debug, Clone, Default)]
pub struct MomentExpr {
    pub terms: HashMap<Moment, f64>,
    pub constant: f64,
}

impl MomentExpr {
    pub fn add(&mut self, m: Moment, coeff: f64) {
        *self.terms.entry(m).or_insert(0.0) += coeff;
    }

    pub fn negated(&self) -> MomentExpr {
        MomentExpr {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect(),
            constant: -self.constant,
        }
    }
}

/// Values assigned to the eleven independent click-projector moments.
#[derive(Debug, Clone, PartialEq)]
pub struct PinSet {
    /// <A_x>
    pub alice: [f64; N_X],
    /// <B_y>
    pub bob: [f64; N_Y],
    /// <A_x B_y>
    pub joint: [[f64; N_Y]; N_X],
}

impl PinSet {
    /// Collapses per-outcome constraints `(a,b,x,y,value)` to projector
    /// moments, validating normalization, ranges and no-signaling
    /// consistency. Marginals are averaged over the other party's input.
    pub fn from_behavior_constraints(
        constraints: &[(usize, usize, usize, usize, f64)],
        signaling_tol: f64,
    ) -> Result<PinSet, AssemblyError> {
        let mut table = [[[[f64::NAN; N_Y]; N_X]; 2]; 2];
        for &(a, b, x, y, v) in constraints {
            if x >= N_X || y >= N_Y || a >= 2 || b >= 2 {
                return Err(AssemblyError::BadSetting { x: x + 1, y: y + 1 });
            }
            if !(-1e-9..=1.0 + 1e-9).contains(&v) {
                return Err(AssemblyError::PinOutOfRange { a, b, x, y, value: v });
            }
            table[a][b][x][y] = v;
        }
        let mut flat = [0.0; 24];
        for x in 0..N_X {
            for y in 0..N_Y {
                let mut sum = 0.0;
                for a in 0..2 {
                    for b in 0..2 {
                        let v = table[a][b][x][y];
                        if v.is_nan() {
                            return Err(AssemblyError::Incomplete { x: x + 1, y: y + 1 });
                        }
                        sum += v;
                        flat[((a * 2 + b) * N_X + x) * N_Y + y] = v;
                    }
                }
                if (sum - 1.0).abs() > 1e-6 {
                    return Err(AssemblyError::PinsNotNormalized { x: x + 1, y: y + 1, sum });
                }
            }
        }
        let b = Behavior::new(flat)
            .map_err(|_| AssemblyError::PinsNotNormalized { x: 1, y: 1, sum: f64::NAN })?;
        PinSet::from_behavior(&b, signaling_tol)
    }

    pub fn from_behavior(b: &Behavior, signaling_tol: f64) -> Result<PinSet, AssemblyError> {
        let mut alice = [0.0; N_X];
        let mut bob = [0.0; N_Y];
        let mut joint = [[0.0; N_Y]; N_X];
        for x in 0..N_X {
            let per_y: Vec<f64> =
                (0..N_Y).map(|y| b.get(0, 0, x, y) + b.get(0, 1, x, y)).collect();
            let spread = spread(&per_y);
            if spread > signaling_tol {
                return Err(AssemblyError::Signaling {
                    party: "Alice",
                    input: x + 1,
                    spread,
                    tol: signaling_tol,
                });
            }
            alice[x] = per_y.iter().sum::<f64>() / N_Y as f64;
        }
        for y in 0..N_Y {
            let per_x: Vec<f64> =
                (0..N_X).map(|x| b.get(0, 0, x, y) + b.get(1, 0, x, y)).collect();
            let spread = spread(&per_x);
            if spread > signaling_tol {
                return Err(AssemblyError::Signaling {
                    party: "Bob",
                    input: y + 1,
                    spread,
                    tol: signaling_tol,
                });
            }
            bob[y] = per_x.iter().sum::<f64>() / N_X as f64;
        }
        for x in 0..N_X {
            for y in 0..N_Y {
                joint[x][y] = b.get(0, 0, x, y);
            }
        }
        Ok(PinSet { alice, bob, joint })
    }

    /// Moment -> pinned value, including the identity.
    pub fn as_map(&self) -> HashMap<Moment, f64> {
        use super::symbol::{a, b};
        let mut m = identity_pin();
        for x in 0..N_X {
            m.insert(Moment::of(&Monomial::from_word(&[a(x as u8)])), self.alice[x]);
        }
        for y in 0..N_Y {
            m.insert(Moment::of(&Monomial::from_word(&[b(y as u8)])), self.bob[y]);
        }
        for x in 0..N_X {
            for y in 0..N_Y {
                m.insert(
                    Moment::of(&Monomial::from_word(&[a(x as u8), b(y as u8)])),
                    self.joint[x][y],
                );
            }
        }
        m
    }
}

fn spread(v: &[f64]) -> f64 {
    v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min)
}

/// Pin map constraining nothing but normalization.
pub fn identity_pin() -> HashMap<Moment, f64> {
    let mut m = HashMap::new();
    m.insert(Moment::of(&Monomial::identity()), 1.0);
    m
}

/// Where a moment landed: substituted constant or free variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Term {
    Pinned(f64),
    Var(usize),
}

/// One PSD moment block over a slice of the basis.
#[derive(Debug, Clone)]
pub struct MomentBlock {
    pub words: Vec<Monomial>,
    /// (r, c, value) from pinned moments, r <= c.
    pub const_cells: Vec<(usize, usize, f64)>,
    /// (var, r, c), r <= c.
    pub var_cells: Vec<(usize, usize, usize)>,
    /// (pin-key, r, c) cells carrying pinned moments, for dual extraction.
    pub pin_cells: Vec<(Moment, usize, usize)>,
}

/// Scalar inequality `bound - moment >= 0`.
#[derive(Debug, Clone)]
pub struct ScalarBound {
    pub var: usize,
    pub bound: f64,
}

#[derive(Debug, Clone)]
pub struct MomentProblem {
    pub basis: Vec<Monomial>,
    pub blocks: Vec<MomentBlock>,
    /// var id -> canonical moment
    pub var_moments: Vec<Moment>,
    pub gram_index: HashMap<Moment, Term>,
    pub objective: Vec<(usize, f64)>,
    pub objective_offset: f64,
    /// objective coefficient attached to each pinned moment
    pub objective_pins: HashMap<Moment, f64>,
    pub bounds: Vec<ScalarBound>,
    pub pins: HashMap<Moment, f64>,
}

/// Groups basis words into PSD blocks: measurement-only words are shared by
/// every quadrature node's clique. Cross-node words force a single block.
fn group_words(basis: &[Monomial]) -> Vec<Vec<Monomial>> {
    let mut nodes: Vec<u8> = basis.iter().flat_map(|w| w.z_nodes()).collect();
    nodes.sort_unstable();
    nodes.dedup();
    let cross = basis.iter().any(|w| w.z_nodes().len() > 1);
    if nodes.is_empty() || cross {
        return vec![basis.to_vec()];
    }
    let meas: Vec<Monomial> = basis.iter().filter(|w| !w.has_z()).cloned().collect();
    nodes
        .iter()
        .map(|&i| {
            let mut grp = meas.clone();
            grp.extend(basis.iter().filter(|w| w.z_nodes() == [i]).cloned());
            grp
        })
        .collect()
}

/// Assembles the moment problem over `spec`'s basis with full behavior pins.
pub fn assemble(
    spec: &BasisSpec,
    pins: &PinSet,
    objective: &MomentExpr,
    norm_bounds: &[(Moment, f64)],
) -> MomentProblem {
    assemble_with_basis(build_basis(spec), &pins.as_map(), objective, norm_bounds)
}

/// Assembly from an explicit basis and pin map. Pinned moments become
/// constants inside the blocks; every other distinct canonical moment is a
/// free variable shared across the blocks where it appears.
pub fn assemble_with_basis(
    basis: Vec<Monomial>,
    pin_map: &HashMap<Moment, f64>,
    objective: &MomentExpr,
    norm_bounds: &[(Moment, f64)],
) -> MomentProblem {
    let mut gram_index: HashMap<Moment, Term> = HashMap::new();
    for (m, v) in pin_map {
        gram_index.insert(m.clone(), Term::Pinned(*v));
    }
    let mut var_moments: Vec<Moment> = Vec::new();
    let mut blocks = Vec::new();
    for words in group_words(&basis) {
        let dim = words.len();
        let mut const_cells = Vec::new();
        let mut var_cells = Vec::new();
        let mut pin_cells = Vec::new();
        for r in 0..dim {
            let radj = words[r].adjoint();
            for c in r..dim {
                let m = Moment::of(&radj.mul(&words[c]));
                match gram_index.get(&m) {
                    Some(Term::Pinned(v)) => {
                        const_cells.push((r, c, *v));
                        pin_cells.push((m, r, c));
                    }
                    Some(Term::Var(id)) => var_cells.push((*id, r, c)),
                    None => {
                        let id = var_moments.len();
                        var_moments.push(m.clone());
                        gram_index.insert(m, Term::Var(id));
                        var_cells.push((id, r, c));
                    }
                }
            }
        }
        blocks.push(MomentBlock { words, const_cells, var_cells, pin_cells });
    }
    let mut obj: HashMap<usize, f64> = HashMap::new();
    let mut offset = objective.constant;
    let mut objective_pins: HashMap<Moment, f64> = HashMap::new();
    for (m, coeff) in &objective.terms {
        match gram_index.get(m) {
            Some(Term::Pinned(v)) => {
                offset += coeff * v;
                *objective_pins.entry(m.clone()).or_insert(0.0) += coeff;
            }
            Some(Term::Var(id)) => {
                *obj.entry(*id).or_insert(0.0) += coeff;
            }
            None => panic!("objective moment {m} not covered by the basis"),
        }
    }
    let mut bounds = Vec::new();
    for (m, alpha) in norm_bounds {
        match gram_index.get(m) {
            Some(Term::Var(id)) => bounds.push(ScalarBound { var: *id, bound: *alpha }),
            other => panic!("norm bound target {m} must be a free moment, found {other:?}"),
        }
    }
    let mut objective: Vec<(usize, f64)> = obj.into_iter().collect();
    objective.sort_unstable_by_key(|&(v, _)| v);
    MomentProblem {
        basis,
        blocks,
        var_moments,
        gram_index,
        objective,
        objective_offset: offset,
        objective_pins,
        bounds,
        pins: pin_map.clone(),
    }
}

impl MomentProblem {
    pub fn n_vars(&self) -> usize {
        self.var_moments.len()
    }

    pub fn compile(&self) -> ConicProgram {
        let psd_blocks = self
            .blocks
            .iter()
            .map(|b| PsdBlockSpec {
                dim: b.words.len(),
                const_tri: b.const_cells.clone(),
                var_tri: b.var_cells.iter().map(|&(v, r, c)| (v, r, c, 1.0)).collect(),
            })
            .collect();
        let nonneg = self
            .bounds
            .iter()
            .map(|sb| AffineRow { constant: sb.bound, terms: vec![(sb.var, -1.0)] })
            .collect();
        ConicProgram {
            n_vars: self.n_vars(),
            objective: self.objective.clone(),
            offset: self.objective_offset,
            psd_blocks,
            nonneg,
            equalities: Vec::new(),
            soc_blocks: Vec::new(),
        }
    }

    /// Sensitivity of the optimal value to each pinned moment, via the
    /// optimal dual blocks: dV/dpin = d_pin - sum_k <E_pin_k, X_k>.
    pub fn pin_sensitivities(&self, sol: &SolverSolution) -> HashMap<Moment, f64> {
        let mut out: HashMap<Moment, f64> = HashMap::new();
        for m in self.pins.keys() {
            out.insert(m.clone(), *self.objective_pins.get(m).unwrap_or(&0.0));
        }
        for (k, b) in self.blocks.iter().enumerate() {
            let d = b.words.len();
            let x = &sol.psd_duals[k];
            for (m, r, c) in &b.pin_cells {
                let w = if r == c { x[r * d + c] } else { x[r * d + c] + x[c * d + r] };
                *out.get_mut(m).expect("pin registered") -= w;
            }
        }
        out
    }
}
