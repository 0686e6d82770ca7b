// SPDX-License-Identifier: MIT OR Apache-2.0

use thiserror::Error;

/// Errors raised by the editing primitives.
#[derive(Debug, Error)]
pub enum LaeError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("invalid latent split: {0}")]
    InvalidSplit(String),
    #[error("zero-norm embedding in {0}: cosine is undefined")]
    ZeroNorm(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("backbone kind mismatch: requested {requested}, file declares {found}")]
    KindMismatch { requested: String, found: String },
    #[error("unsupported format version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("png encoding error: {0}")]
    Png(#[from] png::EncodingError),
}

pub type Result<T> = std::result::Result<T, LaeError>;

pub(crate) fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(LaeError::NonFinite(what.to_string()))
    }
}
