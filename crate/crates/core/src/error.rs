use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, GradeError>;

#[derive(Debug, Error)]
pub enum GradeError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("training diverged at epoch {epoch}: objective = {value}")]
    Divergence { epoch: usize, value: f64 },

    #[error("malformed binary file: {0}")]
    Format(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl GradeError {
    /// Process exit code for this error: 1 for bad input, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            GradeError::Parse { .. }
            | GradeError::Validation(_)
            | GradeError::Config(_)
            | GradeError::Usage(_)
            | GradeError::Format(_) => 1,
            GradeError::Divergence { .. } | GradeError::Io(_) | GradeError::Json(_) => 2,
        }
    }
}
