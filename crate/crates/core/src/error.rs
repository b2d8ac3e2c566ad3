use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A rank, index or digit fell outside the finite depth of a grid.
    #[error("{what} out of range: {value} (limit {limit})")]
    Range {
        what: &'static str,
        value: u64,
        limit: u64,
    },

    #[error("invalid grid configuration: {field}: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("grid configurations do not match")]
    ConfigMismatch,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("cells do not form a partition: {0}")]
    NotAPartition(String),

    #[error("step function is not constant below rank {0}")]
    Unresolved(u32),

    #[error("family is empty")]
    EmptyFamily,

    #[error("family is identically zero")]
    ZeroFamily,

    #[error("invalid family: {0}")]
    InvalidFamily(String),

    #[error("negative value where a nonnegative one is required: {0}")]
    Negative(String),

    #[error("series values may exceed 2^52 (bound {bound:e})")]
    ValueGuard { bound: f64 },

    #[error("coefficient mode mismatch: expected {expected}, got {got}")]
    ModeMismatch {
        expected: &'static str,
        got: &'static str,
    },

    #[error("empty failure window: j={j} needs a block n >= {} but N_max={nmax}", j + 1)]
    EmptyWindow { j: u32, nmax: u32 },

    #[error("hypothesis not satisfied: {0}")]
    Hypothesis(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn range(what: &'static str, value: impl TryInto<u64>, limit: impl TryInto<u64>) -> Self {
        Error::Range {
            what,
            value: value.try_into().unwrap_or(u64::MAX),
            limit: limit.try_into().unwrap_or(u64::MAX),
        }
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
