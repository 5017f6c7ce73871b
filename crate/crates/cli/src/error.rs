use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("{0}")]
    Refused(String),

    #[error("step {step}: inner iteration stopped after {iterations} iterations (relative change {change:e})")]
    NonConvergence {
        step: usize,
        iterations: usize,
        change: f64,
    },

    #[error("comparison failed: {0}")]
    ComparisonFailed(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Numerics(#[from] anitv::Error),
}

impl CliError {
    /// 0 success, 1 validation, 2 solver non-convergence, 3 comparison failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::NonConvergence { .. } => 2,
            CliError::ComparisonFailed(_) => 3,
            _ => 1,
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}
