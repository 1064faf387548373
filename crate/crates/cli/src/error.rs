//! Process-level error taxonomy: every failure maps to one documented
//! exit code and a single-line diagnostic.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed or inconsistent configuration (exit 2).
    #[error("{0}")]
    Config(String),
    /// The inference run or its post-processing failed (exit 3).
    #[error("{0}")]
    Inference(String),
    /// An artifact could not be written or read (exit 4).
    #[error("{0}")]
    Io(String),
    /// The gradient check exceeded its tolerance (exit 5).
    #[error("{0}")]
    GradCheck(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Inference(_) => 3,
            CliError::Io(_) => 4,
            CliError::GradCheck(_) => 5,
        }
    }

    pub fn config(e: impl std::fmt::Display) -> CliError {
        CliError::Config(e.to_string())
    }

    pub fn inference(e: impl std::fmt::Display) -> CliError {
        CliError::Inference(e.to_string())
    }

    pub fn io(e: impl std::fmt::Display) -> CliError {
        CliError::Io(e.to_string())
    }
}
