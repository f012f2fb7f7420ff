use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("linear system is singular even with jitter {jitter:e}")]
    Singular { jitter: f64 },

    #[error("degenerate intercept denominator {0:e}")]
    DegenerateIntercept(f64),

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("friedman statistic undefined: {0}")]
    DegenerateStatistic(String),

    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Coarse classification used for process exit codes.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) | Error::InvalidParameter(_) => ErrorCategory::Config,
            Error::Io { .. } | Error::Csv { .. } | Error::Serde(_) => ErrorCategory::Io,
            Error::Trial { source, .. } => match source.category() {
                ErrorCategory::Config => ErrorCategory::Config,
                ErrorCategory::Io => ErrorCategory::Io,
                _ => ErrorCategory::Training,
            },
            _ => ErrorCategory::Training,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Training,
    Io,
}
