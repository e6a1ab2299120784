//! Bell scenario, behaviors and derived statistics.
//!
//! The scenario is fixed to two inputs for Alice, three for Bob, binary
//! outcomes, with outcome 0 denoting a detector click. A [`Behavior`] stores
//! the conditional distribution P(a,b|x,y) and is the common currency between
//! the source model, the statistical layer and the entropy bounds.
//!
//! Inputs are 0-based in the API; CSV/JSON ingress and egress use 1-based
//! labels matching the usual tabulated conventions.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;
use thiserror::Error;

/// Alice inputs.
pub const N_X: usize = 2;
/// Bob inputs.
pub const N_Y: usize = 3;
/// Normalization tolerance for conditional distributions.
pub const NORM_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum CorrelationsError {
    #[error("counts for setting (x={x},y={y}) sum to {got}, declared rounds {declared}")]
    CountMismatch { x: usize, y: usize, got: u64, declared: u64 },
    #[error("setting (x={x},y={y}): distribution sums to {sum}, not 1")]
    NotNormalized { x: usize, y: usize, sum: f64 },
    #[error("entry P({a},{b}|{x},{y}) = {value} outside [0,1]")]
    OutOfRange { a: usize, b: usize, x: usize, y: usize, value: f64 },
    #[error("Collins-Gisin reconstruction gives P({a},{b}|{x},{y}) = {value} outside [0,1]")]
    Reconstruction { a: usize, b: usize, x: usize, y: usize, value: f64 },
    #[error("count table: {0}")]
    Table(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// The 2x3-input binary-outcome scenario with a designated key setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub n_inputs_a: usize,
    pub n_inputs_b: usize,
    pub n_outcomes: usize,
    /// Key-generation input of Alice (0-based).
    pub key_input_a: usize,
    /// Key-generation input of Bob (0-based).
    pub key_input_b: usize,
    /// Probability of each (x,y) setting pair.
    pub input_distribution: [[f64; N_Y]; N_X],
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            n_inputs_a: N_X,
            n_inputs_b: N_Y,
            n_outcomes: 2,
            key_input_a: 0,
            key_input_b: 2,
            input_distribution: [[1.0 / 6.0; N_Y]; N_X],
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<(), CorrelationsError> {
        let sum: f64 = self.input_distribution.iter().flatten().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CorrelationsError::Table(format!(
                "input distribution sums to {sum}, not 1"
            )));
        }
        if self.key_input_a >= N_X || self.key_input_b >= N_Y {
            return Err(CorrelationsError::Table("key input out of range".into()));
        }
        Ok(())
    }

    /// Largest setting probability, the `q` of the confidence-region formula.
    pub fn max_setting_probability(&self) -> f64 {
        self.input_distribution
            .iter()
            .flatten()
            .cloned()
            .fold(0.0, f64::max)
    }
}

/// Conditional distribution P(a,b|x,y); a,b in {0,1}, outcome 0 = click.
#[derive(Debug, Clone, PartialEq)]
pub struct Behavior {
    p: [f64; 24],
}

#[inline]
fn idx(a: usize, b: usize, x: usize, y: usize) -> usize {
    ((a * 2 + b) * N_X + x) * N_Y + y
}

impl Behavior {
    /// Builds a behavior, enforcing range and per-setting normalization.
    /// Negative dust below `1e-9` (from solver output) is clipped.
    pub fn new(p: [f64; 24]) -> Result<Self, CorrelationsError> {
        let mut q = p;
        for a in 0..2 {
            for b in 0..2 {
                for x in 0..N_X {
                    for y in 0..N_Y {
                        let v = q[idx(a, b, x, y)];
                        if !(-1e-9..=1.0 + 1e-9).contains(&v) {
                            return Err(CorrelationsError::OutOfRange { a, b, x, y, value: v });
                        }
                        q[idx(a, b, x, y)] = v.clamp(0.0, 1.0);
                    }
                }
            }
        }
        for x in 0..N_X {
            for y in 0..N_Y {
                let sum: f64 = (0..2)
                    .flat_map(|a| (0..2).map(move |b| (a, b)))
                    .map(|(a, b)| q[idx(a, b, x, y)])
                    .sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(CorrelationsError::NotNormalized { x, y, sum });
                }
                // renormalize the residual float dust away
                for a in 0..2 {
                    for b in 0..2 {
                        q[idx(a, b, x, y)] /= sum;
                    }
                }
            }
        }
        Ok(Behavior { p: q })
    }

    pub fn uniform() -> Self {
        Behavior { p: [0.25; 24] }
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, x: usize, y: usize) -> f64 {
        self.p[idx(a, b, x, y)]
    }

    /// Raw storage in (a,b,x,y) lexicographic order.
    pub fn as_flat(&self) -> &[f64; 24] {
        &self.p
    }

    /// Key-basis distribution (P(0,0), P(0,1), P(1,0), P(1,1)) at the scenario's key setting.
    pub fn key_distribution(&self, sc: &Scenario) -> [f64; 4] {
        let (x, y) = (sc.key_input_a, sc.key_input_b);
        [
            self.get(0, 0, x, y),
            self.get(0, 1, x, y),
            self.get(1, 0, x, y),
            self.get(1, 1, x, y),
        ]
    }

    /// Serializes as a JSON object keyed `"P(a,b|x,y)"` with 1-based inputs.
    pub fn to_json(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for a in 0..2 {
            for b in 0..2 {
                for x in 0..N_X {
                    for y in 0..N_Y {
                        map.insert(
                            format!("P({a},{b}|{},{})", x + 1, y + 1),
                            serde_json::json!(self.get(a, b, x, y)),
                        );
                    }
                }
            }
        }
        serde_json::Value::Object(map)
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self, CorrelationsError> {
        let mut p = [0.0; 24];
        let obj = v
            .as_object()
            .ok_or_else(|| CorrelationsError::Table("behavior JSON must be an object".into()))?;
        for a in 0..2 {
            for b in 0..2 {
                for x in 0..N_X {
                    for y in 0..N_Y {
                        let key = format!("P({a},{b}|{},{})", x + 1, y + 1);
                        let val = obj
                            .get(&key)
                            .and_then(|v| v.as_f64())
                            .ok_or_else(|| CorrelationsError::Table(format!("missing {key}")))?;
                        p[idx(a, b, x, y)] = val;
                    }
                }
            }
        }
        Behavior::new(p)
    }
}

/// One experimental round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub x: usize,
    pub y: usize,
    pub a: usize,
    pub b: usize,
}

/// Marginals averaged over the other party's input, with the worst
/// setting-dependence seen across that average.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    /// `alice[x][a]` = P_A(a|x), averaged over y.
    pub alice: [[f64; 2]; N_X],
    /// `bob[y][b]` = P_B(b|y), averaged over x.
    pub bob: [[f64; 2]; N_Y],
    /// Largest absolute discrepancy of any marginal across the averaged-out input.
    pub discrepancy: f64,
}

/// Empirical frequencies from a count tensor.
///
/// `counts[a][b][x][y]` are event counts; `rounds[x][y]` the declared number
/// of rounds per setting. Division is exact per entry.
pub fn from_counts(
    counts: &[[[[u64; N_Y]; N_X]; 2]; 2],
    rounds: &[[u64; N_Y]; N_X],
) -> Result<Behavior, CorrelationsError> {
    let mut p = [0.0; 24];
    for x in 0..N_X {
        for y in 0..N_Y {
            let sum: u64 = (0..2).flat_map(|a| (0..2).map(move |b| (a, b)))
                .map(|(a, b)| counts[a][b][x][y])
                .sum();
            if sum != rounds[x][y] {
                return Err(CorrelationsError::CountMismatch {
                    x: x + 1,
                    y: y + 1,
                    got: sum,
                    declared: rounds[x][y],
                });
            }
            for a in 0..2 {
                for b in 0..2 {
                    p[idx(a, b, x, y)] = counts[a][b][x][y] as f64 / rounds[x][y] as f64;
                }
            }
        }
    }
    Behavior::new(p)
}

pub fn marginals(b: &Behavior) -> Marginals {
    let mut alice = [[0.0; 2]; N_X];
    let mut bob = [[0.0; 2]; N_Y];
    let mut disc: f64 = 0.0;
    for x in 0..N_X {
        for a in 0..2 {
            let per_y: Vec<f64> = (0..N_Y)
                .map(|y| b.get(a, 0, x, y) + b.get(a, 1, x, y))
                .collect();
            let avg = per_y.iter().sum::<f64>() / N_Y as f64;
            alice[x][a] = avg;
            disc = disc.max(spread(&per_y));
        }
    }
    for y in 0..N_Y {
        for bo in 0..2 {
            let per_x: Vec<f64> = (0..N_X)
                .map(|x| b.get(0, bo, x, y) + b.get(1, bo, x, y))
                .collect();
            let avg = per_x.iter().sum::<f64>() / N_X as f64;
            bob[y][bo] = avg;
            disc = disc.max(spread(&per_x));
        }
    }
    Marginals { alice, bob, discrepancy: disc }
}

fn spread(v: &[f64]) -> f64 {
    let mx = v.iter().cloned().fold(f64::MIN, f64::max);
    let mn = v.iter().cloned().fold(f64::MAX, f64::min);
    mx - mn
}

/// Worst marginal setting-dependence; zero iff the behavior is no-signaling.
pub fn no_signaling_residual(b: &Behavior) -> f64 {
    marginals(b).discrepancy
}

/// Minimal 11-parameter coordinates of a no-signaling behavior:
/// `(P_A(1|1), P_A(1|2), P_B(1|1..3), P(1,1|x,y) row-major)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollinsGisinVector(pub [f64; 11]);

pub fn collins_gisin(b: &Behavior) -> CollinsGisinVector {
    let m = marginals(b);
    let mut h = [0.0; 11];
    h[0] = m.alice[0][1];
    h[1] = m.alice[1][1];
    for y in 0..N_Y {
        h[2 + y] = m.bob[y][1];
    }
    for x in 0..N_X {
        for y in 0..N_Y {
            h[5 + x * N_Y + y] = b.get(1, 1, x, y);
        }
    }
    CollinsGisinVector(h)
}

/// Rebuilds the full distribution from Collins-Gisin coordinates using
/// normalization and no-signaling.
pub fn to_behavior(h: &CollinsGisinVector) -> Result<Behavior, CorrelationsError> {
    let hv = &h.0;
    let mut p = [0.0; 24];
    for x in 0..N_X {
        for y in 0..N_Y {
            let pa1 = hv[x];
            let pb1 = hv[2 + y];
            let p11 = hv[5 + x * N_Y + y];
            let table = [
                (0, 0, 1.0 - pa1 - pb1 + p11),
                (0, 1, pb1 - p11),
                (1, 0, pa1 - p11),
                (1, 1, p11),
            ];
            for (a, b, v) in table {
                if !(-1e-9..=1.0 + 1e-9).contains(&v) {
                    return Err(CorrelationsError::Reconstruction { a, b, x, y, value: v });
                }
                p[idx(a, b, x, y)] = v;
            }
        }
    }
    Behavior::new(p)
}

/// CHSH winning probability over the given pair of Bob inputs.
///
/// Inputs are re-indexed to k,l in {0,1} in listed order; the game is won
/// when a xor b = k*l. Score (1/4) sum over settings of the win probability.
pub fn chsh_score(b: &Behavior, which_y: (usize, usize)) -> f64 {
    let ys = [which_y.0, which_y.1];
    let mut w = 0.0;
    for (k, &x) in [0usize, 1].iter().enumerate() {
        for (l, &y) in ys.iter().enumerate() {
            for a in 0..2 {
                for bb in 0..2 {
                    if (a ^ bb) == (k & l) {
                        w += b.get(a, bb, x, y);
                    }
                }
            }
        }
    }
    w / 4.0
}

/// One fiber's worth of a count table: per-setting counts in the column
/// order of the ingestion CSV (`n11,n10,n01,n00`).
#[derive(Debug, Clone, PartialEq)]
pub struct CountTable {
    pub fiber_m: f64,
    pub mean_photon: f64,
    /// counts[x][y] = (n11, n10, n01, n00)
    pub counts: [[[u64; 4]; N_Y]; N_X],
    pub rounds: [[u64; N_Y]; N_X],
}

impl CountTable {
    pub fn behavior(&self) -> Result<Behavior, CorrelationsError> {
        let mut c = [[[[0u64; N_Y]; N_X]; 2]; 2];
        for x in 0..N_X {
            for y in 0..N_Y {
                let [n11, n10, n01, n00] = self.counts[x][y];
                c[1][1][x][y] = n11;
                c[1][0][x][y] = n10;
                c[0][1][x][y] = n01;
                c[0][0][x][y] = n00;
            }
        }
        from_counts(&c, &self.rounds)
    }

    pub fn total_rounds(&self) -> u64 {
        self.rounds.iter().flatten().sum()
    }
}

/// Reads a count-table CSV with header `fiber_m,mean_photon,x,y,n11,n10,n01,n00`.
/// Rows may cover several fibers; one table per fiber is returned, sorted by length.
pub fn read_count_csv<R: Read>(reader: R) -> Result<Vec<CountTable>, CorrelationsError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let expect = ["fiber_m", "mean_photon", "x", "y", "n11", "n10", "n01", "n00"];
    let hdr = rdr.headers()?.clone();
    if hdr.iter().collect::<Vec<_>>() != expect {
        return Err(CorrelationsError::Table(format!(
            "bad header {:?}, expected {:?}",
            hdr.iter().collect::<Vec<_>>(),
            expect
        )));
    }
    let mut groups: BTreeMap<u64, (f64, f64, Vec<(usize, usize, [u64; 4])>)> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let f = |i: usize| -> Result<f64, CorrelationsError> {
            rec.get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| CorrelationsError::Table(format!("bad field {i} in {rec:?}")))
        };
        let u = |i: usize| -> Result<u64, CorrelationsError> {
            rec.get(i)
                .and_then(|s| s.trim().parse::<u64>().ok())
                .ok_or_else(|| CorrelationsError::Table(format!("bad field {i} in {rec:?}")))
        };
        let fiber = f(0)?;
        let mean_photon = f(1)?;
        let (x, y) = (u(2)? as usize, u(3)? as usize);
        if !(1..=N_X).contains(&x) || !(1..=N_Y).contains(&y) {
            return Err(CorrelationsError::Table(format!("setting ({x},{y}) out of range")));
        }
        let counts = [u(4)?, u(5)?, u(6)?, u(7)?];
        groups
            .entry(fiber.to_bits())
            .or_insert((fiber, mean_photon, Vec::new()))
            .2
            .push((x - 1, y - 1, counts));
    }
    if groups.is_empty() {
        return Err(CorrelationsError::Table("no data rows".into()));
    }
    let mut out = Vec::new();
    for (_, (fiber, mean_photon, rows)) in groups {
        let mut counts = [[[0u64; 4]; N_Y]; N_X];
        let mut seen = [[false; N_Y]; N_X];
        for (x, y, c) in rows {
            if seen[x][y] {
                return Err(CorrelationsError::Table(format!(
                    "duplicate setting ({},{}) for fiber {fiber}",
                    x + 1,
                    y + 1
                )));
            }
            seen[x][y] = true;
            counts[x][y] = c;
        }
        if seen.iter().flatten().any(|s| !s) {
            return Err(CorrelationsError::Table(format!(
                "fiber {fiber}: not all 6 settings present"
            )));
        }
        let mut rounds = [[0u64; N_Y]; N_X];
        for x in 0..N_X {
            for y in 0..N_Y {
                rounds[x][y] = counts[x][y].iter().sum();
            }
        }
        out.push(CountTable { fiber_m: fiber, mean_photon, counts, rounds });
    }
    out.sort_by(|a, b| a.fiber_m.total_cmp(&b.fiber_m));
    Ok(out)
}

pub fn read_count_csv_path<P: AsRef<Path>>(path: P) -> Result<Vec<CountTable>, CorrelationsError> {
    read_count_csv(std::fs::File::open(path)?)
}
