//! Crate-wide error type.
//!
//! Variants are grouped by how a caller should react: configuration errors
//! are caller mistakes (bad bounds, malformed flags), data errors cover
//! everything wrong with a dataset on disk, and `NonFinite` signals that a
//! computation produced NaN/Inf and the run must abort.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration supplied by the caller (bad hyper-parameter
    /// ranges, inconsistent bounds, unknown enum values, ...).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A dataset, partition, or checkpoint on disk is malformed.
    #[error("data error: {0}")]
    Data(String),

    /// A sample payload ended before the expected number of values.
    #[error("truncated payload in {path}: expected {expected} f32 values, found {found}")]
    TruncatedPayload {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    /// Tensor dimensions disagree with what a manifest or model declared.
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    /// A numeric computation produced a NaN or infinity.
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    /// An underlying I/O operation failed.
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// JSON (de)serialization failed.
    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// Attach a path to a raw I/O error.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attach a path to a JSON error.
    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
