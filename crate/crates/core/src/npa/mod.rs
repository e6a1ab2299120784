//! Noncommutative moment relaxations: operator symbols and canonical words,
//! monomial bases per relaxation level, moment-matrix assembly with behavior
//! pins and operator-norm bounds, and pluggable conic solver backends.

pub mod basis;
pub mod clarabel_backend;
pub mod hkm;
pub mod problem;
pub mod solver;
pub mod symbol;

pub use basis::{build_basis, BasisSpec, LevelSpec};
pub use problem::{assemble, assemble_with_basis, AssemblyError, MomentExpr, MomentProblem, PinSet};
pub use solver::{
    register_solver, solver_by_name, ConicProgram, ConicSolver, SolverConfig, SolverError,
    SolverSolution, SolverStatus,
};
pub use symbol::{Moment, Monomial, OperatorSymbol};
