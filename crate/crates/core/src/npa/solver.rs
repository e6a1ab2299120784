//! Conic-program contract shared by solver backends, and the backend
//! registry.
//!
//! A program is stated over free variables `y`: minimize a linear objective
//! subject to affine-in-`y` PSD blocks, scalar inequalities, equalities and
//! second-order cones. Backends are registered by name and selected at
//! runtime; every solve returns a status-tagged solution with dual blocks so
//! callers can build certificates. A JSON dump of the full program is
//! available for offline debugging and cross-solver comparison.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("unknown solver backend `{0}`")]
    UnknownBackend(String),
    #[error("backend `{backend}` does not support {feature}")]
    Unsupported { backend: &'static str, feature: &'static str },
    #[error("solver setup: {0}")]
    Setup(String),
}

/// constant + sum coeff * y_v
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineRow {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl AffineRow {
    pub fn eval(&self, y: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * y[v]).sum::<f64>()
    }
}

/// S = C0 + sum_v y_v C_v must be positive semidefinite. Entries address the
/// lower-or-upper triangle once (r <= c) and are mirrored implicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdBlockSpec {
    pub dim: usize,
    /// (r, c, value) of C0 with r <= c.
    pub const_tri: Vec<(usize, usize, f64)>,
    /// (var, r, c, coeff) of C_v with r <= c.
    pub var_tri: Vec<(usize, usize, usize, f64)>,
}

/// min objective . y + offset subject to the listed cones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ConicProgram {
    pub n_vars: usize,
    pub objective: Vec<(usize, f64)>,
    pub offset: f64,
    pub psd_blocks: Vec<PsdBlockSpec>,
    /// Each row must be >= 0.
    pub nonneg: Vec<AffineRow>,
    /// Each row must be == 0.
    pub equalities: Vec<AffineRow>,
    /// Rows (t, u_1..u_k) with ||u|| <= t.
    pub soc_blocks: Vec<Vec<AffineRow>>,
}

impl ConicProgram {
    pub fn objective_value(&self, y: &[f64]) -> f64 {
        self.offset + self.objective.iter().map(|&(v, c)| c * y[v]).sum::<f64>()
    }

    /// Offline problem dump: variables, sparse blocks and constraints.
    pub fn dump_json(&self) -> serde_json::Value {
        serde_json::json!({
            "format": "conic-program/1",
            "n_vars": self.n_vars,
            "objective": { "offset": self.offset, "terms": self.objective },
            "psd_blocks": self.psd_blocks,
            "nonneg": self.nonneg,
            "equalities": self.equalities,
            "soc_blocks": self.soc_blocks,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverStatus {
    Optimal,
    NearOptimal,
    Infeasible,
    NumericalFailure,
}

impl SolverStatus {
    pub fn is_usable(&self) -> bool {
        matches!(self, SolverStatus::Optimal | SolverStatus::NearOptimal)
    }
}

/// Solver output. `psd_duals` holds one dense symmetric multiplier matrix per
/// PSD block (row-major, dim x dim); `nonneg_duals` one multiplier per row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverSolution {
    pub status: SolverStatus,
    pub primal_value: f64,
    pub dual_value: f64,
    pub y: Vec<f64>,
    pub psd_duals: Vec<Vec<f64>>,
    pub nonneg_duals: Vec<f64>,
    pub iterations: usize,
    pub message: String,
}

impl SolverSolution {
    pub fn gap(&self) -> f64 {
        (self.primal_value - self.dual_value).abs()
            / (1.0 + self.primal_value.abs() + self.dual_value.abs())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    pub backend: String,
    /// Relative duality-gap target.
    pub gap_tol: f64,
    /// Residual feasibility target.
    pub feas_tol: f64,
    pub max_iter: usize,
    pub verbose: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            backend: "hkm".into(),
            gap_tol: 1e-7,
            feas_tol: 1e-7,
            max_iter: 120,
            verbose: false,
        }
    }
}

/// A conic solver backend. Implementations must be safe to call from several
/// threads at once; each call confines its working state to the call.
pub trait ConicSolver: Send + Sync {
    fn name(&self) -> &'static str;
    /// True when the backend can handle every cone the program uses.
    fn supports(&self, program: &ConicProgram) -> bool;
    fn solve(&self, program: &ConicProgram, cfg: &SolverConfig) -> Result<SolverSolution, SolverError>;
}

type Factory = Arc<dyn ConicSolver>;

fn registry() -> &'static RwLock<BTreeMap<String, Factory>> {
    static REGISTRY: std::sync::OnceLock<RwLock<BTreeMap<String, Factory>>> =
        std::sync::OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut m: BTreeMap<String, Factory> = BTreeMap::new();
        m.insert("hkm".into(), Arc::new(super::hkm::HkmSolver::default()));
        m.insert("clarabel".into(), Arc::new(super::clarabel_backend::ClarabelSolver));
        RwLock::new(m)
    })
}

/// Registers (or replaces) a backend under `name`.
pub fn register_solver(name: &str, solver: Arc<dyn ConicSolver>) {
    registry().write().unwrap().insert(name.to_string(), solver);
}

pub fn solver_by_name(name: &str) -> Result<Arc<dyn ConicSolver>, SolverError> {
    registry()
        .read()
        .unwrap()
        .get(name)
        .cloned()
        .ok_or_else(|| SolverError::UnknownBackend(name.to_string()))
}

pub fn registered_solvers() -> Vec<String> {
    registry().read().unwrap().keys().cloned().collect()
}

/// Solves with the configured backend, falling back to one that supports the
/// program's cones when the configured backend does not.
pub fn solve_with_fallback(
    program: &ConicProgram,
    cfg: &SolverConfig,
) -> Result<SolverSolution, SolverError> {
    let primary = solver_by_name(&cfg.backend)?;
    if primary.supports(program) {
        return primary.solve(program, cfg);
    }
    for name in registered_solvers() {
        let s = solver_by_name(&name)?;
        if s.supports(program) {
            return s.solve(program, cfg);
        }
    }
    Err(SolverError::Unsupported { backend: "any", feature: "the program's cone mix" })
}
