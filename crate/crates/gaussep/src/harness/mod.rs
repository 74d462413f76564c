//! Monte Carlo experiment orchestration: bound verification, convergence and
//! tail studies, the block-construction tightness study, and deterministic
//! CSV/JSON persistence.

mod config;
mod report;
mod runs;

pub use config::{EpsilonPolicy, ExperimentConfig, OutputFormat};
pub use report::{
    CellReport, ExperimentReport, MCEstimate, PartialSumRow, SlopeRow, TailRow, TightnessRow,
};
pub use runs::{
    run_bound_experiment, run_convergence_study, run_delta_diagnostics, run_hermite_check,
    run_remark_tightness, run_tail_study,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("output write failed: {0}")]
    OutputWriteFailed(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] crate::covmodels::CovError),
    #[error(transparent)]
    Sampler(#[from] crate::sampler::SamplerError),
    #[error(transparent)]
    Hermite(#[from] crate::hermite::HermiteError),
    #[error(transparent)]
    Empirical(#[from] crate::empirical::EmpiricalError),
    #[error(transparent)]
    Kernel(#[from] crate::kernel::KernelError),
}

impl HarnessError {
    /// Process exit code for the CLI: 2 for configuration problems, 3 for
    /// I/O, 1 otherwise (bound/invariant violations are reported through the
    /// report's pass flags, not through errors).
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::OutputWriteFailed(_) => 3,
            HarnessError::Config(_)
            | HarnessError::Model(_)
            | HarnessError::Sampler(_)
            | HarnessError::Hermite(_)
            | HarnessError::Empirical(_)
            | HarnessError::Kernel(_) => 2,
        }
    }
}
