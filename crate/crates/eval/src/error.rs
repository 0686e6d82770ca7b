// SPDX-License-Identifier: MIT OR Apache-2.0

use laekit_core::LaeError;
use laekit_train::TrainError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("nothing to evaluate: {0}")]
    Empty(String),
    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("estimator failed on sample {index}: {message}")]
    Estimator { index: usize, message: String },
    #[error(transparent)]
    Core(#[from] LaeError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl EvalError {
    /// Errors caused by bad input rather than by the computation.
    pub fn is_config(&self) -> bool {
        match self {
            Self::Empty(_) | Self::UnknownAttribute(_) | Self::InvalidArgument(_) => true,
            Self::Train(e) => e.is_config(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, EvalError>;
