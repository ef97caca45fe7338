use std::path::{Path, PathBuf};

use thiserror::Error;
use transport_clustering::Error as CoreError;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_VIOLATION: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("{0} bound violation(s)")]
    Violation(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io { .. } | CliError::Parse { .. } => EXIT_DATA,
            CliError::Core(e) => match e {
                CoreError::NonConvergence { .. }
                | CoreError::StepFailure { .. }
                | CoreError::Marginal { .. }
                | CoreError::Infeasible(_)
                | CoreError::ZeroMass(_)
                | CoreError::TooDense { .. } => EXIT_SOLVER,
                _ => EXIT_DATA,
            },
            CliError::Violation(_) => EXIT_VIOLATION,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn parse(path: &Path, message: impl ToString) -> Self {
        CliError::Parse {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
