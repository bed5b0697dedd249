//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left} vs {right}")]
    ShapeMismatch {
        op: &'static str,
        left: String,
        right: String,
    },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("batch normalization requires batch size >= 2 in train mode, got {0}")]
    BatchSize(usize),

    #[error("model state error: {0}")]
    State(String),

    #[error("non-deterministic forward pass: {0}")]
    NonDeterministic(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("dataset split requires at least 10 rows, got {0}")]
    Split(usize),

    #[error("ingest error: {0}")]
    Ingest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
