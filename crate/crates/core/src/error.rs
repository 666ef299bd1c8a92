use std::path::PathBuf;

use thiserror::Error;

use crate::variogram::FitResult;

pub type Result<T, E = FessError> = std::result::Result<T, E>;

/// Errors produced by the library.
///
/// [`FessError::is_usage`] separates input/validation problems from failures
/// of the numerical procedures themselves, which the CLI maps to exit codes.
#[derive(Debug, Error)]
pub enum FessError {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed CSV: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: schema error: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("{path}: row {row}, column '{column}': {message}")]
    Cell {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },

    #[error("{path}: malformed config: {source}")]
    Config {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("fit did not converge after {starts} starts (best sse {:.6e})", best.sse)]
    FitNotConverged { starts: usize, best: Box<FitResult> },

    #[error("inadmissible covariance structure: {0}")]
    Inadmissible(String),

    #[error("factorization failed: {0}")]
    Factorization(String),
}

impl FessError {
    /// True for errors caused by bad input rather than a failed computation.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            FessError::Invalid(_)
                | FessError::Io { .. }
                | FessError::Csv { .. }
                | FessError::Schema { .. }
                | FessError::Cell { .. }
                | FessError::Config { .. }
        )
    }
}
