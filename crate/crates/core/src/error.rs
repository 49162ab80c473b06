//! Error type shared across the library.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FbmcError {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("matrix is rank deficient in {context}: sigma_min/sigma_max = {ratio:.3e}")]
    RankDeficient { context: &'static str, ratio: f64 },

    #[error("matrix inversion failed in {context}")]
    SingularMatrix { context: &'static str },

    #[error("design failed at subcarrier {subcarrier}: {source}")]
    DesignAtSubcarrier {
        subcarrier: usize,
        #[source]
        source: Box<FbmcError>,
        /// JSON channel snapshot for replaying the failure.
        snapshot: String,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unsupported value for {what}: {value}")]
    Unsupported { what: &'static str, value: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
