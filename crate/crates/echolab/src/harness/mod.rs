//! Experiment harness: config loading, quasi-random hyperparameter search,
//! the repeated-search protocol, sweeps, and report files.

mod config;
mod experiment;
pub mod quasi;
mod report;
mod sweep;

pub use config::{ArmSpec, ExperimentConfig, OptimizerSection, PipelineSection, SearchSection};
pub use experiment::{
    pick_winner, run_experiment, summarize, trials_csv_header, write_summary_json,
    write_trials_csv, ArmSummary, ExperimentOutcome, ExperimentSummary, RunOptions, SearchOutcome,
    TrialResult,
};
pub use quasi::{DimScale, HaltonSequence, SearchDim, SearchSpace};
pub use report::{read_trials_csv, rebuild_summary};
pub use sweep::{run_sweep, SweepAxis, SweepOutcome, SweepRow};

use std::path::PathBuf;

use thiserror::Error;

use crate::trainer::{TaskError, TrainError};

/// Error running the harness.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("config error: {0}")]
    Invalid(String),
    #[error("task error: {0}")]
    Task(#[from] TaskError),
    #[error("training setup error: {0}")]
    Train(#[from] TrainError),
    #[error(
        "arm `{arm}` search {search}: too many diverged draws; widen or shift the search ranges"
    )]
    TooManyDiverged { arm: String, search: u64 },
}
