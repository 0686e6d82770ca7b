// SPDX-License-Identifier: MIT OR Apache-2.0

use laekit_core::LaeError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("config error: {0}")]
    Config(String),
    #[error("non-finite loss term `{term}` at step {step}")]
    NonFiniteLoss { term: &'static str, step: u64 },
    #[error(transparent)]
    Core(#[from] LaeError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl TrainError {
    pub fn is_config(&self) -> bool {
        matches!(self, Self::Config(_))
    }
}

pub type Result<T> = std::result::Result<T, TrainError>;
