use std::path::PathBuf;

use forcecheck_core::Error as CoreError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

/// Errors surfaced by the command layer, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{0}")]
    Data(String),
    #[error("infeasible configuration: {0}")]
    Infeasible(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Parse { .. } | CliError::Data(_) | CliError::Io { .. } => 3,
            CliError::Infeasible(_) => 4,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::DatasetTooSmall { .. } | CoreError::StreamExhausted { .. } => {
                CliError::Infeasible(e.to_string())
            }
            CoreError::NonFinite(_)
            | CoreError::ZeroNorm
            | CoreError::EmptyTrace
            | CoreError::TraceTooShort { .. }
            | CoreError::DimensionMismatch { .. }
            | CoreError::EmptyRecords
            | CoreError::EmptyReports => CliError::Data(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}
