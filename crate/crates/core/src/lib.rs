//! Certified key rates for device-independent QKD against collective attacks.
//!
//! The pipeline: measurement statistics (simulated from an SPDC source model
//! or ingested from count tables) are projected onto the quantum set, the
//! key-basis distribution is post-selected and noise-preprocessed, the
//! conditional von Neumann entropy of Alice's bit against the eavesdropper is
//! lower-bounded by quadrature-based semidefinite relaxations, and the
//! Devetak-Winter rate, dual Bell functional and confidence radius are
//! assembled into a report.

extern crate openblas_src;

pub mod correlations;
pub mod entropy;
pub mod npa;
pub mod preprocess;
pub mod spdc;

pub use correlations::{Behavior, Scenario};
pub use preprocess::{PreprocessParams, ProcessedStats};
pub use spdc::SpdcParams;
