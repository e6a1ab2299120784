//! Lower bounds on the conditional von Neumann entropy of Alice's
//! post-selected, noise-preprocessed key bit against the eavesdropper.
//!
//! The relative-entropy integral is discretized by a Gauss-Radau rule on
//! [0,1] with the last node fixed at 1; each interior node contributes a
//! noncommutative optimization over a pair of Z operators, relaxed through
//! the moment machinery of [`crate::npa`] with the full 24-entry behavior
//! pinned. Two interchangeable strategies solve the resulting program:
//!
//! * `joint` (default): one program; all nodes share the measurement-sector
//!   moments, one PSD clique per node.
//! * `pernode`: independent programs per node, summed. Faster, never above
//!   the joint value, still a valid lower bound.
//!
//! The dual multipliers of the behavior pins assemble into an affine Bell
//! functional tangent to the bound at the pinned behavior.

use crate::correlations::{Behavior, Scenario, N_X, N_Y};
use crate::npa::basis::{build_basis, BasisSpec, LevelSpec};
use crate::npa::problem::{
    assemble_with_basis, AssemblyError, MomentExpr, MomentProblem, PinSet, Term,
};
use crate::npa::solver::{
    solve_with_fallback, SolverConfig, SolverError, SolverSolution, SolverStatus,
};
use crate::npa::symbol::{a as sym_a, b as sym_b, z as sym_z, zdag, Moment, Monomial};
use crate::preprocess::{retention_probability, PreprocessError, PreprocessParams};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};
use thiserror::Error;

const LN2: f64 = std::f64::consts::LN_2;

#[derive(Debug, Error)]
pub enum EntropyError {
    #[error("quadrature order must be >= 1, got {0}")]
    BadOrder(usize),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("solver returned {status:?}: {message}; no certified bound available")]
    NotCertified { status: SolverStatus, message: String },
    #[error("retention probability is zero; post-selection keeps nothing")]
    ZeroRetention,
    #[error("unknown bound strategy `{0}`")]
    UnknownStrategy(String),
}

/// Gauss-Radau rule on [0,1] with fixed endpoint t_m = 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    pub m: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Monic shifted-Legendre recurrence on [0,1]: alpha_k = 1/2,
/// beta_k = k^2 / (4 (4k^2 - 1)), mu_0 = 1.
pub fn gauss_radau(m: usize) -> Result<Quadrature, EntropyError> {
    if m < 1 {
        return Err(EntropyError::BadOrder(m));
    }
    if m == 1 {
        return Ok(Quadrature { m, nodes: vec![1.0], weights: vec![1.0] });
    }
    let alpha = vec![0.5; m];
    let beta: Vec<f64> = (0..m)
        .map(|k| {
            if k == 0 {
                0.0
            } else {
                let k = k as f64;
                k * k / (4.0 * (4.0 * k * k - 1.0))
            }
        })
        .collect();
    // shift the last diagonal entry so that 1 becomes a node
    let end = 1.0;
    let (mut p_prev, mut p) = (1.0, end - alpha[0]);
    for k in 1..m - 1 {
        let next = (end - alpha[k]) * p - beta[k] * p_prev;
        p_prev = p;
        p = next;
    }
    let alpha_last = end - beta[m - 1] * p_prev / p;
    let mut jac = DMatrix::<f64>::zeros(m, m);
    for k in 0..m {
        jac[(k, k)] = if k == m - 1 { alpha_last } else { alpha[k] };
        if k > 0 {
            let off = beta[k].sqrt();
            jac[(k, k - 1)] = off;
            jac[(k - 1, k)] = off;
        }
    }
    let eig = jac.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..m)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut nodes: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let weights: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    nodes[m - 1] = 1.0; // exact endpoint
    Ok(Quadrature { m, nodes, weights })
}

/// c_m = -1/(m^2 ln 2) + sum_i w_i / (t_i ln 2).
pub fn c_m(q: &Quadrature) -> f64 {
    let m = q.m as f64;
    -1.0 / (m * m * LN2)
        + q.nodes
            .iter()
            .zip(&q.weights)
            .map(|(t, w)| w / (t * LN2))
            .sum::<f64>()
}

/// Affine Bell functional tangent to the entropy bound at the pinned
/// behavior: g(P) = alpha + sum lambda_abxy P(a,b|x,y), equivalently
/// beta + sum_t gamma_t h_t over the 11 Collins-Gisin coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BellFunctional {
    pub alpha: f64,
    /// lambda[a][b][x][y] flattened in (a,b,x,y) lexicographic order.
    pub lambda: Vec<f64>,
    pub cg_beta: f64,
    pub cg_gamma: [f64; 11],
}

impl BellFunctional {
    /// Evaluation through the 24-coefficient form.
    pub fn evaluate(&self, b: &Behavior) -> f64 {
        let mut g = self.alpha;
        let mut idx = 0;
        for a in 0..2 {
            for bo in 0..2 {
                for x in 0..N_X {
                    for y in 0..N_Y {
                        g += self.lambda[idx] * b.get(a, bo, x, y);
                        idx += 1;
                    }
                }
            }
        }
        g
    }

    /// Evaluation through the Collins-Gisin form.
    pub fn evaluate_cg(&self, b: &Behavior) -> f64 {
        let h = crate::correlations::collins_gisin(b);
        self.cg_beta + self.cg_gamma.iter().zip(&h.0).map(|(g, h)| g * h).sum::<f64>()
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Builds both forms from moment-space sensitivities.
    fn from_moment_sensitivities(
        bound_at_pin: f64,
        pins: &PinSet,
        sens: &HashMap<Moment, f64>,
    ) -> BellFunctional {
        let lam_a: Vec<f64> = (0..N_X)
            .map(|x| sens[&Moment::of(&Monomial::from_word(&[sym_a(x as u8)]))])
            .collect();
        let lam_b: Vec<f64> = (0..N_Y)
            .map(|y| sens[&Moment::of(&Monomial::from_word(&[sym_b(y as u8)]))])
            .collect();
        let lam_j: Vec<Vec<f64>> = (0..N_X)
            .map(|x| {
                (0..N_Y)
                    .map(|y| {
                        sens[&Moment::of(&Monomial::from_word(&[sym_a(x as u8), sym_b(y as u8)]))]
                    })
                    .collect()
            })
            .collect();
        // affine offset in moment coordinates
        let mut alpha = bound_at_pin;
        for x in 0..N_X {
            alpha -= lam_a[x] * pins.alice[x];
        }
        for y in 0..N_Y {
            alpha -= lam_b[y] * pins.bob[y];
        }
        for x in 0..N_X {
            for y in 0..N_Y {
                alpha -= lam_j[x][y] * pins.joint[x][y];
            }
        }
        // 24-coefficient form with marginals spread uniformly over the
        // averaged-out input (matching PinSet::from_behavior)
        let mut lambda = vec![0.0; 24];
        let mut put = |a: usize, b: usize, x: usize, y: usize, v: f64| {
            lambda[((a * 2 + b) * N_X + x) * N_Y + y] += v;
        };
        for x in 0..N_X {
            for y in 0..N_Y {
                put(0, 0, x, y, lam_j[x][y]);
                put(0, 0, x, y, lam_a[x] / N_Y as f64);
                put(0, 1, x, y, lam_a[x] / N_Y as f64);
                put(0, 0, x, y, lam_b[y] / N_X as f64);
                put(1, 0, x, y, lam_b[y] / N_X as f64);
            }
        }
        // Collins-Gisin form via <A_x> = 1 - h_x, <B_y> = 1 - h_{2+y},
        // <A_x B_y> = 1 - h_x - h_{2+y} + h_{5+3x+y}
        let mut cg_beta = alpha;
        let mut cg_gamma = [0.0; 11];
        for x in 0..N_X {
            cg_beta += lam_a[x];
            cg_gamma[x] -= lam_a[x];
        }
        for y in 0..N_Y {
            cg_beta += lam_b[y];
            cg_gamma[2 + y] -= lam_b[y];
        }
        for x in 0..N_X {
            for y in 0..N_Y {
                cg_beta += lam_j[x][y];
                cg_gamma[x] -= lam_j[x][y];
                cg_gamma[2 + y] -= lam_j[x][y];
                cg_gamma[5 + 3 * x + y] += lam_j[x][y];
            }
        }
        BellFunctional { alpha, lambda, cg_beta, cg_gamma }
    }
}

/// Result of one entropy-bound computation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntropyBoundResult {
    /// Certified lower bound on H(A|E) in bits.
    pub bound: f64,
    pub c_m: f64,
    /// Each interior node's contribution to `bound - c_m`.
    pub per_node_terms: Vec<f64>,
    pub solver_status: SolverStatus,
    pub dual_functional: BellFunctional,
    pub p_v: f64,
    pub strategy: String,
    pub iterations: usize,
}

/// Configuration of the bound computation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntropyConfig {
    pub m: usize,
    pub level: LevelSpec,
    /// Bound strategy name from the registry: `joint` or `pernode`.
    pub strategy: String,
    /// Generate cross-node Z words (single monolithic moment block).
    pub cross_node_words: bool,
    pub solver: SolverConfig,
    /// No-signaling tolerance on the pinned behavior.
    pub signaling_tol: f64,
}

impl Default for EntropyConfig {
    fn default() -> Self {
        EntropyConfig {
            m: 8,
            level: "2+ABZ+AZZ".parse().expect("valid level"),
            strategy: "joint".into(),
            cross_node_words: false,
            solver: SolverConfig::default(),
            signaling_tol: 1e-6,
        }
    }
}

impl EntropyConfig {
    /// Cheap settings for screening passes and CI.
    pub fn screening() -> Self {
        EntropyConfig {
            m: 4,
            level: "2".parse().expect("valid level"),
            strategy: "pernode".into(),
            solver: SolverConfig { gap_tol: 1e-6, feas_tol: 1e-6, ..Default::default() },
            ..Default::default()
        }
    }
}

/// Per-node objective pieces: coefficient w_i/(t_i ln2) and the norm bound
/// alpha_i, for interior nodes only.
fn node_schedule(q: &Quadrature) -> Vec<(f64, f64)> {
    (0..q.m - 1)
        .map(|i| {
            let t = q.nodes[i];
            let w = q.weights[i];
            (w / (t * LN2), 1.5 * (1.0 / t).max(1.0 / (1.0 - t)))
        })
        .collect()
}

/// Words of the post-selected, flipped key operators over
/// {1, P, Q, PQ} with P = A_xbar, Q = B_ybar.
struct KeyOperators {
    mhat: [Vec<(Monomial, f64)>; 2],
    msum: Vec<(Monomial, f64)>,
}

fn key_operators(sc: &Scenario, pre: &PreprocessParams, p_v: f64) -> KeyOperators {
    let p = pre.p;
    let pn = pre.p_n;
    let pw = Monomial::from_word(&[sym_a(sc.key_input_a as u8)]);
    let qw = Monomial::from_word(&[sym_b(sc.key_input_b as u8)]);
    let pqw = pw.mul(&qw);
    let iw = Monomial::identity();
    // M0 = (p P + (1-p) PQ)/p_v ; M1 = (p^2 + (p-p^2) Q - p^2 P - (p-p^2) PQ)/p_v
    let m0 = vec![(pw.clone(), p / p_v), (pqw.clone(), (1.0 - p) / p_v)];
    let m1 = vec![
        (iw.clone(), p * p / p_v),
        (qw.clone(), (p - p * p) / p_v),
        (pw.clone(), -p * p / p_v),
        (pqw.clone(), -(p - p * p) / p_v),
    ];
    let mix = |a: &[(Monomial, f64)], b: &[(Monomial, f64)], w: f64| -> Vec<(Monomial, f64)> {
        let mut out: HashMap<Monomial, f64> = HashMap::new();
        for (m, c) in a {
            *out.entry(m.clone()).or_insert(0.0) += (1.0 - w) * c;
        }
        for (m, c) in b {
            *out.entry(m.clone()).or_insert(0.0) += w * c;
        }
        out.into_iter().collect()
    };
    let mhat0 = mix(&m0, &m1, pn);
    let mhat1 = mix(&m1, &m0, pn);
    let msum = mix(&m0, &m1, 0.5)
        .into_iter()
        .map(|(m, c)| (m, 2.0 * c))
        .collect();
    KeyOperators { mhat: [mhat0, mhat1], msum }
}

/// Objective and norm bounds for one interior node.
fn node_objective(
    ops: &KeyOperators,
    node: u8,
    coef: f64,
    t: f64,
    alpha: f64,
) -> (MomentExpr, Vec<(Moment, f64)>) {
    let mut expr = MomentExpr::default();
    let mut bounds = Vec::new();
    for a in 0..2u8 {
        let zw = sym_z(a, node);
        let zd = zdag(a, node);
        for (w, c) in &ops.mhat[a as usize] {
            // <w (Z + Z*)>: both words share one real moment variable
            expr.add(Moment::of(&w.append(zw)), 2.0 * c * coef);
            // (1 - t) <w Z* Z>
            let mut zz = w.append(zd);
            zz = zz.append(zw);
            expr.add(Moment::of(&zz), (1.0 - t) * c * coef);
        }
        for (w, c) in &ops.msum {
            // t <w Z Z*>
            let mut zz = w.append(zw);
            zz = zz.append(zd);
            expr.add(Moment::of(&zz), t * c * coef);
        }
        bounds.push((Moment::of(&Monomial::from_word(&[zw, zd])), alpha));
        bounds.push((Moment::of(&Monomial::from_word(&[zd, zw])), alpha));
    }
    (expr, bounds)
}

fn basis_cache() -> &'static Mutex<HashMap<(u8, String, bool), Arc<Vec<Monomial>>>> {
    static CACHE: OnceLock<Mutex<HashMap<(u8, String, bool), Arc<Vec<Monomial>>>>> =
        OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn cached_basis(n_nodes: u8, level: &LevelSpec, cross: bool) -> Arc<Vec<Monomial>> {
    let key = (n_nodes, level.to_string(), cross);
    let mut cache = basis_cache().lock().unwrap();
    cache
        .entry(key)
        .or_insert_with(|| {
            Arc::new(build_basis(&BasisSpec {
                n_inputs_a: N_X as u8,
                n_inputs_b: N_Y as u8,
                n_z_nodes: n_nodes,
                level: level.clone(),
                cross_node_z: cross,
            }))
        })
        .clone()
}

/// Everything a bound strategy needs.
struct BoundContext<'c> {
    scenario: &'c Scenario,
    pins: PinSet,
    pre: PreprocessParams,
    p_v: f64,
    quad: Quadrature,
    cfg: &'c EntropyConfig,
}

trait BoundStrategy: Send + Sync {
    fn name(&self) -> &'static str;
    fn compute(&self, ctx: &BoundContext) -> Result<EntropyBoundResult, EntropyError>;
}

/// Evaluates a moment expression at a solved problem.
fn eval_expr(problem: &MomentProblem, sol: &SolverSolution, expr: &MomentExpr) -> f64 {
    let mut v = expr.constant;
    for (m, c) in &expr.terms {
        v += c * match problem.gram_index.get(m) {
            Some(Term::Pinned(p)) => *p,
            Some(Term::Var(id)) => sol.y[*id],
            None => 0.0,
        };
    }
    v
}

fn certified(sol: &SolverSolution) -> Result<(), EntropyError> {
    if sol.status.is_usable() {
        Ok(())
    } else {
        Err(EntropyError::NotCertified { status: sol.status, message: sol.message.clone() })
    }
}

/// One program, all nodes; the moment structure is one PSD clique per node
/// sharing the measurement sector (or a single block with cross words).
struct JointStrategy;

impl BoundStrategy for JointStrategy {
    fn name(&self) -> &'static str {
        "joint"
    }

    fn compute(&self, ctx: &BoundContext) -> Result<EntropyBoundResult, EntropyError> {
        let n_nodes = (ctx.quad.m - 1) as u8;
        let ops = key_operators(ctx.scenario, &ctx.pre, ctx.p_v);
        let sched = node_schedule(&ctx.quad);
        let mut objective = MomentExpr::default();
        let mut bounds = Vec::new();
        let mut node_exprs = Vec::new();
        for (i, (coef, alpha)) in sched.iter().enumerate() {
            let (expr, nb) = node_objective(&ops, i as u8, *coef, ctx.quad.nodes[i], *alpha);
            for (m, c) in &expr.terms {
                objective.add(m.clone(), *c);
            }
            bounds.extend(nb);
            node_exprs.push(expr);
        }
        let basis = cached_basis(n_nodes, &ctx.cfg.level, ctx.cfg.cross_node_words);
        let problem =
            assemble_with_basis((*basis).clone(), &ctx.pins.as_map(), &objective, &bounds);
        let sol = solve_with_fallback(&problem.compile(), &ctx.cfg.solver)?;
        certified(&sol)?;
        let cm = c_m(&ctx.quad);
        let bound = cm + sol.primal_value;
        let per_node_terms: Vec<f64> =
            node_exprs.iter().map(|e| eval_expr(&problem, &sol, e)).collect();
        let sens = problem.pin_sensitivities(&sol);
        let dual = BellFunctional::from_moment_sensitivities(bound, &ctx.pins, &sens);
        Ok(EntropyBoundResult {
            bound,
            c_m: cm,
            per_node_terms,
            solver_status: sol.status,
            dual_functional: dual,
            p_v: ctx.p_v,
            strategy: self.name().into(),
            iterations: sol.iterations,
        })
    }
}

/// Independent program per node; values and sensitivities add up. Never
/// above the joint value, still a valid lower bound.
struct PerNodeStrategy;

impl BoundStrategy for PerNodeStrategy {
    fn name(&self) -> &'static str {
        "pernode"
    }

    fn compute(&self, ctx: &BoundContext) -> Result<EntropyBoundResult, EntropyError> {
        use rayon::prelude::*;
        let ops = key_operators(ctx.scenario, &ctx.pre, ctx.p_v);
        let sched = node_schedule(&ctx.quad);
        let basis = cached_basis(1, &ctx.cfg.level, false);
        let pin_map = ctx.pins.as_map();
        let solves: Result<Vec<(f64, HashMap<Moment, f64>, SolverStatus, usize)>, EntropyError> =
            sched
                .par_iter()
                .enumerate()
                .map(|(i, (coef, alpha))| {
                    let (expr, bounds) =
                        node_objective(&ops, 0, *coef, ctx.quad.nodes[i], *alpha);
                    let problem = assemble_with_basis(
                        (*basis).clone(),
                        &pin_map,
                        &expr,
                        &bounds,
                    );
                    let sol = solve_with_fallback(&problem.compile(), &ctx.cfg.solver)?;
                    certified(&sol)?;
                    let sens = problem.pin_sensitivities(&sol);
                    Ok((sol.primal_value, sens, sol.status, sol.iterations))
                })
                .collect();
        let solves = solves?;
        let cm = c_m(&ctx.quad);
        let per_node_terms: Vec<f64> = solves.iter().map(|s| s.0).collect();
        let bound = cm + per_node_terms.iter().sum::<f64>();
        let mut total_sens: HashMap<Moment, f64> = HashMap::new();
        for (_, sens, _, _) in &solves {
            for (m, v) in sens {
                *total_sens.entry(m.clone()).or_insert(0.0) += v;
            }
        }
        let status = solves
            .iter()
            .map(|s| s.2)
            .fold(SolverStatus::Optimal, |acc, s| {
                if s == SolverStatus::Optimal { acc } else { s }
            });
        let iterations = solves.iter().map(|s| s.3).max().unwrap_or(0);
        let dual = BellFunctional::from_moment_sensitivities(bound, &ctx.pins, &total_sens);
        Ok(EntropyBoundResult {
            bound,
            c_m: cm,
            per_node_terms,
            solver_status: status,
            dual_functional: dual,
            p_v: ctx.p_v,
            strategy: self.name().into(),
            iterations,
        })
    }
}

fn strategy_by_name(name: &str) -> Result<&'static dyn BoundStrategy, EntropyError> {
    static JOINT: JointStrategy = JointStrategy;
    static PERNODE: PerNodeStrategy = PerNodeStrategy;
    match name {
        "joint" => Ok(&JOINT),
        "pernode" => Ok(&PERNODE),
        other => Err(EntropyError::UnknownStrategy(other.to_string())),
    }
}

pub fn bound_strategies() -> Vec<&'static str> {
    vec!["joint", "pernode"]
}

/// Certified lower bound on H(A_key|E) after post-selection `pre.p` and
/// noisy preprocessing `pre.p_n`, from the full pinned behavior.
pub fn entropy_bound(
    behavior: &Behavior,
    scenario: &Scenario,
    pre: &PreprocessParams,
    cfg: &EntropyConfig,
) -> Result<EntropyBoundResult, EntropyError> {
    pre.validate()?;
    let quad = gauss_radau(cfg.m)?;
    let pins = PinSet::from_behavior(behavior, cfg.signaling_tol)?;
    let key = behavior.key_distribution(scenario);
    let p_v = retention_probability(&key, pre.p);
    if p_v <= 0.0 {
        return Err(EntropyError::ZeroRetention);
    }
    let ctx = BoundContext { scenario, pins, pre: *pre, p_v, quad, cfg };
    strategy_by_name(&cfg.strategy)?.compute(&ctx)
}

/// Brute-force H(A|E) of an explicit two-qubit realization (state, Alice's
/// click effect), used as an independent upper-bound oracle for the plain
/// conditional-entropy program (p = 1, p_ن = 0). Eve holds the purification.
pub fn two_qubit_conditional_entropy(
    rho: &crate::spdc::DensityMatrix4,
    alice_click: &nalgebra::Matrix2<nalgebra::Complex<f64>>,
) -> f64 {
    use nalgebra::{Complex, Matrix2, Matrix4};
    type C = Complex<f64>;
    let m = rho.matrix();
    let eig = m.symmetric_eigen();
    // purification |Psi> = sum_i sqrt(l_i) |v_i>_AB |i>_E
    let dim = 4;
    let mut sigma = [Matrix4::<C>::zeros(), Matrix4::<C>::zeros()];
    let effects = [*alice_click, Matrix2::identity() - alice_click];
    for (a, eff) in effects.iter().enumerate() {
        // sigma_E^a[e,f] = sqrt(l_e l_f) <v_f| (M_a x I_B) |v_e>
        let big = eff.kronecker(&Matrix2::identity());
        for e in 0..dim {
            for f in 0..dim {
                let le = eig.eigenvalues[e].max(0.0);
                let lf = eig.eigenvalues[f].max(0.0);
                let ve = eig.eigenvectors.column(e);
                let vf = eig.eigenvectors.column(f);
                let amp = (vf.adjoint() * big * ve)[(0, 0)];
                sigma[a][(e, f)] = amp * C::new((le * lf).sqrt(), 0.0);
            }
        }
    }
    let h_of = |m: &Matrix4<C>| -> f64 {
        m.symmetric_eigen()
            .eigenvalues
            .iter()
            .map(|&l| if l > 1e-15 { -l * l.log2() } else { 0.0 })
            .sum()
    };
    let joint: f64 = sigma.iter().map(h_of).sum();
    let total = sigma[0] + sigma[1];
    joint - h_of(&total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spdc;

    #[test]
    fn radau_m1_and_m2() {
        let q1 = gauss_radau(1).unwrap();
        assert_eq!(q1.nodes, vec![1.0]);
        assert_eq!(q1.weights, vec![1.0]);
        let q2 = gauss_radau(2).unwrap();
        assert!((q2.nodes[0] - 1.0 / 3.0).abs() < 1e-14);
        assert_eq!(q2.nodes[1], 1.0);
        assert!((q2.weights[0] - 0.75).abs() < 1e-14);
        assert!((q2.weights[1] - 0.25).abs() < 1e-14);
        assert!(gauss_radau(0).is_err());
    }

    #[test]
    fn radau_exactness_up_to_2m_minus_2() {
        for m in 1..=8 {
            let q = gauss_radau(m).unwrap();
            assert!((q.weights.iter().sum::<f64>() - 1.0).abs() < 1e-13);
            assert_eq!(q.nodes[m - 1], 1.0);
            for deg in 0..=(2 * m - 2) {
                let integral: f64 = q
                    .nodes
                    .iter()
                    .zip(&q.weights)
                    .map(|(t, w)| w * t.powi(deg as i32))
                    .sum();
                let exact = 1.0 / (deg as f64 + 1.0);
                assert!(
                    (integral - exact).abs() < 1e-12,
                    "m={m} deg={deg}: {integral} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn c_m_values() {
        let q1 = gauss_radau(1).unwrap();
        assert!(c_m(&q1).abs() < 1e-14);
        let q2 = gauss_radau(2).unwrap();
        assert!((c_m(&q2) - 2.25 / LN2).abs() < 1e-12);
    }

    fn reference_behavior() -> Behavior {
        // projected 20 m distribution
        let rows: [[f64; 4]; 6] = [
            [0.9939848305625, 0.0016772430375, 0.0008783402625, 0.0034595861375],
            [0.9907551763625, 0.0049068972375, 0.0008862111125, 0.0034517152875],
            [0.9949539201500, 0.0007081534400, 0.0006388507000, 0.0036990757000],
            [0.9848486222042, 0.0008729597292, 0.0100145486208, 0.0042638694458],
            [0.9775156493042, 0.0082059326292, 0.0141257381708, 0.0001526798958],
            [0.9835762722167, 0.0021453097167, 0.0120164986333, 0.0022619194333],
        ];
        let mut flat = [0.0; 24];
        for (i, row) in rows.iter().enumerate() {
            let (x, y) = (i / 3, i % 3);
            let [p11, p10, p01, p00] = row;
            flat[((0 * 2 + 0) * N_X + x) * N_Y + y] = *p00;
            flat[((0 * 2 + 1) * N_X + x) * N_Y + y] = *p01;
            flat[((1 * 2 + 0) * N_X + x) * N_Y + y] = *p10;
            flat[((1 * 2 + 1) * N_X + x) * N_Y + y] = *p11;
        }
        Behavior::new(flat).unwrap()
    }

    fn quick_cfg(m: usize, strategy: &str) -> EntropyConfig {
        EntropyConfig {
            m,
            strategy: strategy.into(),
            ..Default::default()
        }
    }

    #[test]
    fn reference_bound_m2_both_strategies_and_backends() {
        let b = reference_behavior();
        let pre = PreprocessParams { p: 0.96, p_n: 0.13 };
        let sc = Scenario::default();
        let joint = entropy_bound(&b, &sc, &pre, &quick_cfg(2, "joint")).unwrap();
        // m=2 has a single node: pernode must agree with joint
        let pernode = entropy_bound(&b, &sc, &pre, &quick_cfg(2, "pernode")).unwrap();
        assert!((joint.bound - pernode.bound).abs() < 2e-6, "{} vs {}", joint.bound, pernode.bound);
        // cross-check backends at a cheap level ("2" keeps clarabel's dense
        // PSD handling small)
        let mut cl_cfg = quick_cfg(2, "joint");
        cl_cfg.level = "2".parse().unwrap();
        cl_cfg.solver.backend = "clarabel".into();
        let clarabel = entropy_bound(&b, &sc, &pre, &cl_cfg).unwrap();
        let mut hk_cfg = quick_cfg(2, "joint");
        hk_cfg.level = "2".parse().unwrap();
        let hkm = entropy_bound(&b, &sc, &pre, &hk_cfg).unwrap();
        assert!(
            (hkm.bound - clarabel.bound).abs() < 2e-5,
            "hkm {} vs clarabel {}",
            hkm.bound,
            clarabel.bound
        );
        // frozen regression value from the first validated build
        assert!((joint.bound - 0.42820).abs() < 5e-4, "bound {}", joint.bound);
        assert_eq!(joint.per_node_terms.len(), 1);
        assert!((joint.bound - joint.c_m - joint.per_node_terms[0]).abs() < 1e-9);
    }

    #[test]
    fn dual_functional_touches_bound_and_is_affine() {
        let b = reference_behavior();
        let pre = PreprocessParams { p: 0.96, p_n: 0.13 };
        let sc = Scenario::default();
        let res = entropy_bound(&b, &sc, &pre, &quick_cfg(2, "joint")).unwrap();
        let g = res.dual_functional.evaluate(&b);
        assert!((g - res.bound).abs() < 1e-5, "g={} bound={}", g, res.bound);
        // CG form agrees on no-signaling behaviors
        let g_cg = res.dual_functional.evaluate_cg(&b);
        assert!((g - g_cg).abs() < 1e-9);
        // exact affinity
        let u = Behavior::uniform();
        let mix = |t: f64| -> Behavior {
            let mut flat = [0.0; 24];
            for (i, f) in flat.iter_mut().enumerate() {
                *f = t * b.as_flat()[i] + (1.0 - t) * u.as_flat()[i];
            }
            Behavior::new(flat).unwrap()
        };
        let gmix = res.dual_functional.evaluate(&mix(0.3));
        let expect = 0.3 * res.dual_functional.evaluate(&b)
            + 0.7 * res.dual_functional.evaluate(&u);
        assert!((gmix - expect).abs() < 1e-12);
    }

    #[test]
    fn monotone_in_quadrature_order() {
        let b = reference_behavior();
        let pre = PreprocessParams { p: 0.96, p_n: 0.13 };
        let sc = Scenario::default();
        let mut prev = f64::MIN;
        for m in [2, 3, 4] {
            let mut cfg = quick_cfg(m, "joint");
            cfg.level = "2".parse().unwrap();
            let res = entropy_bound(&b, &sc, &pre, &cfg).unwrap();
            assert!(res.bound >= prev - 1e-9, "m={m}: {} < {prev}", res.bound);
            assert!(res.bound <= 1.0 + 1e-9);
            prev = res.bound;
        }
    }

    #[test]
    fn pernode_never_exceeds_joint() {
        let b = reference_behavior();
        let pre = PreprocessParams { p: 0.96, p_n: 0.13 };
        let sc = Scenario::default();
        let mut cfg_j = quick_cfg(3, "joint");
        cfg_j.level = "2".parse().unwrap();
        let mut cfg_p = quick_cfg(3, "pernode");
        cfg_p.level = "2".parse().unwrap();
        let joint = entropy_bound(&b, &sc, &pre, &cfg_j).unwrap();
        let pernode = entropy_bound(&b, &sc, &pre, &cfg_p).unwrap();
        assert!(
            pernode.bound <= joint.bound + 1e-6,
            "pernode {} joint {}",
            pernode.bound,
            joint.bound
        );
    }

    #[test]
    fn local_deterministic_behavior_certifies_nothing() {
        // a whisker of uniform noise keeps the pinned moment matrix strictly
        // feasible; a hard 0/1 pin has no interior point for the solver
        let eps = 1e-7;
        let mut flat = [eps / 4.0; 24];
        for x in 0..N_X {
            for y in 0..N_Y {
                flat[((0 * 2 + 0) * N_X + x) * N_Y + y] = 1.0 - 0.75 * eps; // always click
            }
        }
        let b = Behavior::new(flat).unwrap();
        let pre = PreprocessParams::identity();
        let sc = Scenario::default();
        let res = entropy_bound(&b, &sc, &pre, &quick_cfg(2, "joint")).unwrap();
        assert!(res.bound <= 1e-5, "bound {}", res.bound);
        // and the tangent functional stays below the bound map over local points
        let mut rng_points = Vec::new();
        for ax in 0..4usize {
            for by in 0..8usize {
                let mut f = [0.0; 24];
                for x in 0..N_X {
                    for y in 0..N_Y {
                        let a = (ax >> x) & 1;
                        let bo = (by >> y) & 1;
                        f[((a * 2 + bo) * N_X + x) * N_Y + y] = 1.0;
                    }
                }
                rng_points.push(Behavior::new(f).unwrap());
            }
        }
        for p in &rng_points {
            let g = res.dual_functional.evaluate(p);
            assert!(g <= res.bound + 1e-5, "g={} bound={}", g, res.bound);
        }
    }

    #[test]
    fn sdp_bound_below_two_qubit_realization() {
        // plain conditional entropy (p=1, p_n=0) at m=2 must stay below the
        // entropy of an explicit realization reproducing the pinned behavior
        let v = 0.995;
        let params = spdc::SpdcParams {
            r: 1.0,
            visibility: v,
            eta_a: 1.0,
            eta_b: 1.0,
            dark_count: 0.0,
            mean_photon: 0.0,
            angles_a: [0.0, std::f64::consts::FRAC_PI_2],
            angles_b: [
                3.0 * std::f64::consts::FRAC_PI_4,
                -3.0 * std::f64::consts::FRAC_PI_4,
                std::f64::consts::PI,
            ],
            max_pairs: 1,
        };
        let mut flat = [0.0; 24];
        for x in 0..N_X {
            for y in 0..N_Y {
                let p = spdc::single_pair_probs(&params, x, y).unwrap();
                for (k, &(a, b)) in [(0, 0), (0, 1), (1, 0), (1, 1)].iter().enumerate() {
                    flat[((a * 2 + b) * N_X + x) * N_Y + y] = p[k];
                }
            }
        }
        let behavior = Behavior::new(flat).unwrap();
        let sc = Scenario::default();
        let res =
            entropy_bound(&behavior, &sc, &PreprocessParams::identity(), &quick_cfg(2, "joint"))
                .unwrap();
        let rho = spdc::werner_state(params.r, params.visibility).unwrap();
        let click = spdc::measurement_effect(params.angles_a[0], 1.0, 0.0).unwrap();
        let h_ae = two_qubit_conditional_entropy(&rho, &click);
        assert!(
            res.bound <= h_ae + 1e-6,
            "sdp {} exceeds realization {}",
            res.bound,
            h_ae
        );
        assert!(res.bound > 0.5, "violation should certify entropy, got {}", res.bound);
    }

    #[test]
    fn unknown_strategy_is_an_error() {
        let b = reference_behavior();
        let mut cfg = quick_cfg(2, "nope");
        cfg.m = 2;
        let err = entropy_bound(&b, &Scenario::default(), &PreprocessParams::identity(), &cfg);
        assert!(matches!(err, Err(EntropyError::UnknownStrategy(_))));
    }
}
