//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RebandError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("wav error: {0}")]
    Wav(#[from] hound::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, RebandError>;

impl RebandError {
    /// Process exit code per the CLI contract: 2 config, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            RebandError::InvalidConfig(_) => 2,
            RebandError::ShapeMismatch(_) | RebandError::InvalidInput(_) => 2,
            RebandError::Numeric(_) => 4,
            _ => 3,
        }
    }
}
