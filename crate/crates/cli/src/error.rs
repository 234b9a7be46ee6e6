use std::path::{Path, PathBuf};

use hedonic_core::Error as CoreError;

/// Exit status 2: bad input, configuration or usage.
pub const EXIT_USAGE: i32 = 2;
/// Exit status 1: the data were read but an estimator failed.
pub const EXIT_NUMERICAL: i32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{0}")]
    Data(String),

    #[error("{context}: {source}")]
    Estimation { context: String, source: CoreError },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    /// Wraps a library error, routing input problems to the usage class.
    pub fn core(context: impl Into<String>, source: CoreError) -> Self {
        let context = context.into();
        match source {
            CoreError::MissingColumn(_) | CoreError::EmptyDataset | CoreError::InvalidRecord { .. } => {
                CliError::Data(format!("{context}: {source}"))
            }
            source => CliError::Estimation { context, source },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Estimation { .. } => EXIT_NUMERICAL,
            _ => EXIT_USAGE,
        }
    }
}

/// Attaches a context label to library results.
pub trait Context<T> {
    fn context(self, what: &str) -> Result<T, CliError>;
}

impl<T> Context<T> for Result<T, CoreError> {
    fn context(self, what: &str) -> Result<T, CliError> {
        self.map_err(|e| CliError::core(what, e))
    }
}
