//! Sparse Bayesian learning: evidence evaluation, the EM / MacKay /
//! convex-bounding / AMQ hyperparameter updates, a scalar denoising rate
//! analyzer and a synthetic experiment harness.

pub mod algorithms;
pub mod denoise1d;
pub mod error;
pub mod evidence;
pub mod harness;
pub mod io;
pub mod model;
pub mod oracle;

mod linalg;

pub use nalgebra;
pub use algorithms::{Algorithm, AlgorithmConfig, ConvergenceTrace, RunOutput, RunSummary, TerminationStatus};
pub use error::{Result, SblError};
pub use evidence::{
    auxiliary_objective, em_surrogate_value, evidence_derivatives, evidence_objective,
    posterior_moments, MomentsMode,
};
pub use model::{EvidenceDerivatives, HyperparamVector, PosteriorMoments, ProblemInstance};
