//! Error taxonomy shared across the crate.

use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tensor or layer shapes do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An argument is outside its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An index (class label, tensor component) is out of range.
    #[error("index out of range: {0}")]
    Index(String),

    /// A caller-side contract was violated (empty inputs, mismatched manifests).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Local training produced a non-finite loss.
    #[error("training diverged on device {device} in round {round}, epoch {epoch}")]
    Diverged {
        device: usize,
        round: usize,
        epoch: usize,
    },

    /// Every device was excluded from a round.
    #[error("round {round}: no device met the delay budget")]
    EmptyRound { round: usize },

    /// A dataset file could not be ingested.
    #[error("cannot ingest {path}: {reason}")]
    Ingestion { path: PathBuf, reason: String },

    /// The experiment config file is malformed.
    #[error("config line {line}: {reason}")]
    Config { line: usize, reason: String },

    /// A serialized model file is malformed.
    #[error("bad model file: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
