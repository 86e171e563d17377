use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("scorer unavailable: {0}")]
    ScorerUnavailable(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    SolverFailure { iterations: usize, residual: f64 },

    #[error("average drop undefined: original score is zero")]
    UndefinedDrop,

    #[error("no bounding box annotated for class {0}")]
    MissingAnnotation(usize),

    #[error("no valid samples to aggregate")]
    EmptyAggregate,

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("series are not aligned: {0}")]
    InvalidAlignment(String),

    #[error("ingest error for {entry}: {reason}")]
    Ingest { entry: String, reason: String },

    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid_argument(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
