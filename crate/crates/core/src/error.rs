use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("image `{0}` contains values other than 0 and 1")]
    NonBinary(&'static str),

    #[error("filter configuration failed: {0}")]
    ConfigurationFailed(String),

    #[error("{0} is undefined for this confusion matrix (zero denominator)")]
    UndefinedMetric(&'static str),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("malformed {what}: {reason}")]
    Parse { what: &'static str, reason: String },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
