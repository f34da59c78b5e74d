//! File formats, configuration, reports and the command-line runner for the
//! `ambipose-core` pipeline.

use std::path::{Path, PathBuf};

use ambipose_core::pipeline::PipelineError;
use ambipose_core::sim::SimError;

pub mod cli;
pub mod config;
pub mod format;
pub mod report;
pub mod runner;

pub use config::{ConfigError, Input, RunConfig};
pub use format::{MeasurementSet, ParseError};
pub use runner::{replay, run_pipeline, RunSummary};

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("{}: {source}", .path.display())]
    Parse { path: PathBuf, source: ParseError },
    #[error("invalid scenario: {0}")]
    Scenario(SimError),
    #[error("solver failure: {0}")]
    Solver(PipelineError),
    #[error("{}: {source}", .path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl AppError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 for bad configuration or input, 3 for solver failures, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) | AppError::Parse { .. } | AppError::Scenario(_) => 2,
            AppError::Solver(_) => 3,
            AppError::Io { .. } => 4,
        }
    }
}
