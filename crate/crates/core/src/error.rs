use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input: wrong shape, non-finite value, non-symmetric matrix.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("{what} = {value} is out of range ({allowed})")]
    Range {
        what: &'static str,
        value: String,
        allowed: String,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// The bulk variance estimate came out non-positive.
    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    #[error("degenerate alignment: cross-Gram matrix is rank deficient (smallest singular value {0:e})")]
    DegenerateAlignment(f64),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("empty feature selection: {0}")]
    EmptySelection(String),

    #[error("{path}: parse error at row {row}, column '{column}': {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("tuning failed: {0}")]
    Tuning(String),

    #[error("simulation run failed: {0}")]
    Run(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn range(what: &'static str, value: impl ToString, allowed: impl ToString) -> Self {
        Error::Range {
            what,
            value: value.to_string(),
            allowed: allowed.to_string(),
        }
    }

    /// True for errors caused by bad input rather than a numerical or runtime failure.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Validation(_)
                | Error::Range { .. }
                | Error::Parse { .. }
                | Error::Schema(_)
                | Error::InsufficientData(_)
                | Error::Split(_)
        )
    }
}
