use std::path::PathBuf;

use thiserror::Error;

/// Failures of a CLI command. Each maps to a stable exit status.
#[derive(Debug, Error)]
pub enum CliError {
    /// A self-check ran and did not pass.
    #[error("check failed: {0}")]
    CheckFailed(String),

    #[error("{0}")]
    Usage(String),

    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("numerical abort: {0}")]
    Numerical(String),

    #[error(transparent)]
    Core(ritz_core::Error),
}

impl CliError {
    pub const OK: i32 = 0;
    pub const CHECK_FAILED: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const NUMERICAL: i32 = 3;

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::CheckFailed(_) => Self::CHECK_FAILED,
            CliError::Usage(_) | CliError::Config { .. } => Self::USAGE,
            CliError::Numerical(_) => Self::NUMERICAL,
            CliError::Core(e) => match e {
                ritz_core::Error::NonFinite { .. } | ritz_core::Error::Diverged { .. } => Self::NUMERICAL,
                _ => Self::USAGE,
            },
        }
    }
}

impl From<ritz_core::Error> for CliError {
    fn from(e: ritz_core::Error) -> Self {
        CliError::Core(e)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
