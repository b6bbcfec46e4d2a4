//! Error type shared across the simulator.

use thiserror::Error;

/// Everything that can go wrong while loading data, training, or running rounds.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("line {line}: malformed interaction record: {reason}")]
    MalformedRecord { line: usize, reason: String },

    #[error("dataset is empty{0}")]
    EmptyDataset(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("secure aggregation requires at least two participants: pairwise masks cannot cancel")]
    MaskingNeedsPeers,

    #[error("participant set changed mid-round (expected {expected} updates, got {got}): aborting round")]
    ParticipantDropout { expected: usize, got: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
