use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the forecasting toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("simulator failure at step {step}: {message}")]
    Simulator { step: usize, message: String },

    #[error("preprocessing failure: {0}")]
    Preprocess(String),

    /// Tukey HSD is a post-hoc procedure and only runs after a significant ANOVA.
    #[error("post-hoc test refused: ANOVA p-value {p_value} is not below alpha {alpha}")]
    PostHocGate { p_value: f64, alpha: f64 },

    #[error("{path}: row {row}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("experiment failed: {0}")]
    Experiment(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("manifest: {0}")]
    Manifest(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
