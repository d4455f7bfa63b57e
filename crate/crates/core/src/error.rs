use thiserror::Error;

/// Errors raised across the localisation engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("estimation failed: {0}")]
    EstimationFailed(String),

    #[error("ambiguous cheirality: {0}")]
    AmbiguousCheirality(String),

    #[error("degenerate weights: {0}")]
    DegenerateWeights(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for errors caused by numerical breakdown rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateGeometry(_)
                | Error::EstimationFailed(_)
                | Error::AmbiguousCheirality(_)
                | Error::DegenerateWeights(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
