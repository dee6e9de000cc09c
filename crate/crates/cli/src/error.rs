use std::path::PathBuf;

use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("bad configuration: {0}")]
    Config(String),
    #[error("missing input {}: {reason}", path.display())]
    MissingInput { path: PathBuf, reason: String },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Core(mpnet_core::Error),
}

impl CliError {
    pub fn missing(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        CliError::MissingInput {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// 0 success, 2 bad config, 3 missing input, 4 numerical failure, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingInput { .. } => 3,
            CliError::Numerical(_) => 4,
            CliError::Core(mpnet_core::Error::NonFinite(_)) => 4,
            CliError::Core(mpnet_core::Error::MissingInput(_)) => 3,
            CliError::Core(mpnet_core::Error::Io { source, .. }) if source.kind() == std::io::ErrorKind::NotFound => 3,
            CliError::Core(_) => 1,
        }
    }
}

impl From<mpnet_core::Error> for CliError {
    fn from(e: mpnet_core::Error) -> Self {
        CliError::Core(e)
    }
}
