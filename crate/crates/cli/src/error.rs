use std::path::{Path, PathBuf};

use gridfault::dataset::DatasetError;
use gridfault::grid::GridError;
use gridfault::tasks::TaskError;
use gridfault::transient::SimError;
use serde_json::json;
use thiserror::Error;

/// Domain failures; all map to exit code 1.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("invalid arguments: {0}")]
    Invalid(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Task(#[from] TaskError),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Parse { .. } => "ParseError",
            CliError::Io { .. } => "IoError",
            CliError::Invalid(_) => "InvalidArguments",
            CliError::Grid(_) => "NetworkError",
            CliError::Sim(_) => "SimulationError",
            CliError::Dataset(_) => "DatasetError",
            CliError::Task(_) => "TaskError",
        }
    }

    /// One-line JSON for stderr.
    pub fn to_json(&self) -> String {
        json!({ "error": self.kind(), "message": self.to_string() }).to_string()
    }

    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io { path: path.to_path_buf(), message: e.to_string() }
    }

    pub fn parse(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Parse { path: path.to_path_buf(), message: e.to_string() }
    }
}
