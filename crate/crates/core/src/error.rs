use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("no points")]
    NoPoints,

    #[error("duplicate points at input indices {pairs:?}")]
    DuplicatePoints { pairs: Vec<(usize, usize)> },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix of size {n} exceeds the dense cap {cap}; use the compressed assembly instead")]
    SizeCap { n: usize, cap: usize },

    #[error("not positive definite at column {column} (pivot {pivot:e}); increase mu")]
    NotPositiveDefinite { column: usize, pivot: f64 },

    #[error("{count} requested entries lie outside the factor pattern, e.g. {examples:?}")]
    PatternNotContained {
        count: usize,
        examples: Vec<(usize, usize)>,
    },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn mismatch(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
