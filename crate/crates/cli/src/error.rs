use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the command-line tool, each mapped to a stable exit
/// code: 1 for configuration or input problems, 2 for numeric failures.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{}: {message}", path.display())]
    Input { path: PathBuf, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("gradient check failed (worst relative error {worst:e} > tolerance {tolerance:e})")]
    GradCheckFailed { worst: f64, tolerance: f64 },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Input { .. } | CliError::Io { .. } => 1,
            CliError::Numeric(_) | CliError::GradCheckFailed { .. } => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

impl From<dude_core::Error> for CliError {
    fn from(e: dude_core::Error) -> Self {
        match e {
            dude_core::Error::NumericFailure { .. } | dude_core::Error::SvdNoConvergence { .. } => {
                CliError::Numeric(e.to_string())
            }
            other => CliError::Config(other.to_string()),
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
