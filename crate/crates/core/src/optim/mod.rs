//! Fine-search machinery: the modified CMA-ES (diagonal covariance,
//! top-k variance update, cumulative step-size adaptation), BFGS constant
//! refinement, and the fitness function R² − ω·complexity.

mod bfgs;
mod cma;
mod metrics;

pub use bfgs::{bfgs_fit_constants, bfgs_minimize, BfgsOptions, BfgsResult};
pub use cma::{cma_init, cma_sample, cma_update, widen, CmaConfig, CmaState};
pub use metrics::{fitness, r2};

use thiserror::Error;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum OptimError {
    /// Every candidate in the generation was invalid (fitness −∞).
    #[error("degenerate generation: every candidate had fitness -inf")]
    Degenerate,
    /// Every BFGS restart failed to evaluate at its initial point.
    #[error("all BFGS restarts failed at their initial points")]
    AllRestartsFailed,
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(&'static str),
}
