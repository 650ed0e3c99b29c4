//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by encoding, training, attacks and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    /// Shape or dimensionality mismatch between tensors.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Invalid configuration value (rejected before any work starts).
    #[error("invalid config: {0}")]
    Config(String),

    /// Malformed or out-of-contract input data.
    #[error("invalid input: {0}")]
    Input(String),

    /// A numeric quantity that must be finite was not.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// An operation hit a degenerate case it refuses to paper over
    /// (zero vector in cosine similarity, constant input to Spearman, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Checkpoint directory is missing, inconsistent or truncated.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
