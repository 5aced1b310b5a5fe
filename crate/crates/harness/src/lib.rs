//! Experiment driver for topological MDPs on the grid navigation domain:
//! exact solves, training, Monte Carlo evaluation, slack sweeps and the
//! property suites behind the `check` command.

use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;
use tmdp::navenv::NavError;
use tmdp::tabular::SolveError;
use tmdp::tpo::{CheckpointError, TpoError};

pub mod chart;
pub mod config;
pub mod experiment;
pub mod suites;

pub use config::ExperimentConfig;
pub use experiment::{evaluate, run_sweep, solve_exact, train, ExactReport, SweepResult, SweepRow, TrainReport};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Train(#[from] TpoError),
    #[error(transparent)]
    Nav(#[from] NavError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    CheckFailed(String),
}

impl HarnessError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }

    /// Process exit code: 1 validation, 2 numerical, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Validation(_) | HarnessError::CheckFailed(_) | HarnessError::Nav(_) => 1,
            HarnessError::Solve(SolveError::NonConvergence { .. }) => 2,
            HarnessError::Solve(_) => 1,
            HarnessError::Train(TpoError::NonFiniteLoss { .. }) => 2,
            HarnessError::Train(_) => 1,
            HarnessError::Checkpoint(CheckpointError::ChecksumMismatch { .. }) => 1,
            HarnessError::Checkpoint(_) | HarnessError::Io { .. } | HarnessError::Csv(_) => 3,
        }
    }
}
