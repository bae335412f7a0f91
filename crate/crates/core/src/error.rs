use thiserror::Error;

pub type Result<T, E = EdlError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum EdlError {
    #[error("{what} {value} out of range (max {max})")]
    OutOfRange {
        what: &'static str,
        value: i64,
        max: i64,
    },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite gradient in parameter block `{0}`")]
    NonFiniteGradient(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("checkpoint is missing parameter block `{0}`")]
    MissingBlock(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl EdlError {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        EdlError::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
