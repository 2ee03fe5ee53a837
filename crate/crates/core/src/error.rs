use thiserror::Error;

/// Errors raised by the co-clustering library.
#[derive(Debug, Error)]
pub enum CocoError {
    #[error("mode {mode} out of range for a {order}-way tensor")]
    ModeOutOfRange { mode: usize, order: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid tensor shape: {0}")]
    InvalidShape(String),

    #[error("rank {rank} out of range for mode {mode} of length {len}")]
    RankOutOfRange {
        mode: usize,
        rank: usize,
        len: usize,
    },

    #[error("empty edge set for mode {0}")]
    EmptyEdges(usize),

    #[error("all pre-weights are zero for mode {0}")]
    ZeroWeights(usize),

    #[error("invalid gamma grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("solver diverged at iteration {iteration} (non-finite iterate); step size too large?")]
    Divergence { iteration: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CocoError {
    pub fn param(field: &str, reason: impl Into<String>) -> Self {
        CocoError::InvalidParameter {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CocoError>;
