use std::path::PathBuf;

use lowmem_experts::{LearnError, StreamError};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("best expert is undefined for an adaptive oracle")]
    Adaptive,
    #[error("enumeration guard exceeded: n*T = {0} > 1e9")]
    Guard(u128),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
