use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {index} = {pivot:e})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("Jacobi eigen solver did not converge within {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("quality {value} at index {index} is outside [{min}, 1]")]
    QualityOutOfRange { index: usize, value: f64, min: f64 },

    #[error("batch similarity kernel stayed singular through the jitter ladder")]
    DegenerateBatch,

    #[error("degenerate batch at training step {step}")]
    DegenerateBatchAtStep { step: usize },

    #[error("non-finite {what} at training step {step}")]
    NonFiniteLoss { step: usize, what: &'static str },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("pool of {pool} designs is smaller than subset size {subset}")]
    PoolTooSmall { pool: usize, subset: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("malformed row at line {line}: {message}")]
    MalformedRow { line: u64, message: String },

    #[error("bad checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },

    #[error("refusing to overwrite {0} (pass --force)")]
    WouldOverwrite(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short stable name of the variant, used in machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NotPositiveDefinite { .. } => "not_positive_definite",
            Error::NoConvergence { .. } => "no_convergence",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::NonFinite(_) => "non_finite",
            Error::QualityOutOfRange { .. } => "quality_out_of_range",
            Error::DegenerateBatch => "degenerate_batch",
            Error::DegenerateBatchAtStep { .. } => "degenerate_batch",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::EmptyDataset => "empty_dataset",
            Error::PoolTooSmall { .. } => "pool_too_small",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Config(_) => "config",
            Error::MalformedRow { .. } => "malformed_row",
            Error::Checkpoint { .. } => "checkpoint",
            Error::WouldOverwrite(_) => "would_overwrite",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    /// Whether the error comes from bad input (config, arguments, files)
    /// rather than from a failure while doing the work.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_)
                | Error::Config(_)
                | Error::MalformedRow { .. }
                | Error::Checkpoint { .. }
                | Error::WouldOverwrite(_)
                | Error::EmptyDataset
                | Error::PoolTooSmall { .. }
        )
    }
}
