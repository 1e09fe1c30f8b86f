use std::fmt::Display;
use std::path::Path;

use precs_core::PrecsError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric error: {0}")]
    Numeric(PrecsError),
    #[error("precondition failed: {0}")]
    NotDecohered(PrecsError),
    #[error("verification failed: {0}")]
    VerifyFailed(String),
}

impl CliError {
    pub fn config(block: &str, err: impl Display) -> Self {
        CliError::Config(format!("{block}: {err}"))
    }

    pub fn io(path: &Path, err: impl Display) -> Self {
        CliError::Config(format!("cannot write {}: {err}", path.display()))
    }

    /// Process exit code.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::VerifyFailed(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::NotDecohered(_) => 4,
        }
    }
}

impl From<PrecsError> for CliError {
    fn from(e: PrecsError) -> Self {
        match e {
            PrecsError::NotDecohered { .. } | PrecsError::Precondition(_) => {
                CliError::NotDecohered(e)
            }
            PrecsError::Io(msg) => CliError::Config(format!("output: {msg}")),
            other => CliError::Numeric(other),
        }
    }
}
