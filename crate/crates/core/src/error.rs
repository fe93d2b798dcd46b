use thiserror::Error;

use crate::share::PartyId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("topology error: {0}")]
    Topology(String),

    #[error("incomplete share set: expected {expected} shares, got {got}")]
    IncompleteShares { expected: usize, got: usize },

    #[error("shape mismatch: {left} vs {right}")]
    Shape { left: usize, right: usize },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("role error: {0}")]
    Role(String),

    #[error("timeout waiting for {what} from {from}")]
    Timeout { what: String, from: PartyId },

    #[error("session aborted: {0}")]
    Aborted(String),

    #[error("malformed frame: {0}")]
    Frame(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("structural error: {0}")]
    Structure(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("model file error: {0}")]
    Model(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
