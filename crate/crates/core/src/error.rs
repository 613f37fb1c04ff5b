use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("AUC undefined: labels contain a single class ({positives} positives, {negatives} negatives)")]
    UndefinedMetric { positives: usize, negatives: usize },

    #[error("fit diverged at iteration {iteration}: {reason}")]
    Divergence {
        iteration: usize,
        reason: String,
        /// Log-posterior values recorded before the failure.
        trace: Vec<f64>,
    },

    #[error("every grid configuration failed: {0}")]
    AllConfigurationsFailed(String),

    #[error("model file: {0}")]
    ModelFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
