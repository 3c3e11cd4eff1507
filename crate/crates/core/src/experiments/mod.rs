//! Experiment harnesses: piecewise affine regression trials comparing MM
//! with the pseudo-subgradient method, and subgradient runs on robust
//! recovery problems.

mod config;
mod lspar_trials;
mod recovery;
mod robust;
mod svg;

use std::path::PathBuf;

use thiserror::Error;

use crate::solvers::SolverError;
use crate::subdiff::SubdiffError;

pub use config::KeyValues;
pub use lspar_trials::{
    initial_weights, pseudo_subgradient_run, run_lspar_experiment, run_lspar_trials, summary_csv,
    trials_csv, tune_subgradient_step, LsparConfig, LsparSummary, Method, MethodSummary,
    TrialRecord,
};
pub use recovery::{
    fit_log_slope, initial_point, run_recovery_experiment, RecoveryConfig, RecoverySummary,
};
pub use robust::{
    gen_robust_instance, robust_subgrad_oracle, sign0, RobustInstance, RobustKind, RobustProblem,
    RobustSpec,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Subdiff(#[from] SubdiffError),
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> ExperimentError {
    let path = path.into();
    move |source| ExperimentError::Io { path, source }
}
