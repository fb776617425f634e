use thiserror::Error;

/// Errors raised by the estimation toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SblError {
    /// Malformed or inconsistent input (dimensions, signs, non-finite entries).
    #[error("input error: {0}")]
    Input(String),

    /// A factorization failed even after the jitter retry.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// The empirical rate estimator ran out of usable samples.
    #[error("window too short: {available} usable ratios, need {required}")]
    WindowTooShort { available: usize, required: usize },

    #[error("io error: {0}")]
    Io(String),
}

impl SblError {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        SblError::Input(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        SblError::Numerical(msg.into())
    }
}

impl From<std::io::Error> for SblError {
    fn from(e: std::io::Error) -> Self {
        SblError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, SblError>;
