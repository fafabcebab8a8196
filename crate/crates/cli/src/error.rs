use thiserror::Error;

use samplet_core::error::Error as CoreError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 2 usage, 3 numerical failure, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) | CliError::Json(_) => 4,
            CliError::Core(e) => match e {
                CoreError::Io(_) | CoreError::Parse { .. } => 4,
                CoreError::NotPositiveDefinite { .. } | CoreError::PatternNotContained { .. } | CoreError::Numeric(_) => 3,
                CoreError::NoPoints
                | CoreError::DuplicatePoints { .. }
                | CoreError::InvalidArgument(_)
                | CoreError::DimensionMismatch(_)
                | CoreError::SizeCap { .. } => 2,
            },
        }
    }
}
