use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("zone {zone} has no valid pixels")]
    EmptyZone { zone: u32 },

    #[error("window [{lo}, {hi}] nm does not intersect the spectrum")]
    OutOfRange { lo: f64, hi: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}: row {row}, column {column}: {message}")]
    Parse {
        path: String,
        row: usize,
        column: String,
        message: String,
    },

    #[error("duplicate record index {index} at row {row}")]
    DuplicateIndex { index: usize, row: usize },

    #[error("feature `{0}` is constant on the training rows")]
    DegenerateFeature(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("training diverged at iteration {iteration}")]
    TrainingFailure { iteration: usize, loss_log: Vec<f64> },

    #[error("SMO did not converge within {iterations} updates (max KKT violation {max_violation:e})")]
    Convergence {
        iterations: usize,
        max_violation: f64,
    },

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("model file schema error: {0}")]
    Schema(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of a numerical routine rather than of the caller's input.
    pub fn is_internal(&self) -> bool {
        match self {
            Error::TrainingFailure { .. } | Error::Convergence { .. } => true,
            Error::Fold { source, .. } => source.is_internal(),
            _ => false,
        }
    }
}
