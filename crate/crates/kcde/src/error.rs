use thiserror::Error;

/// Errors surfaced by the estimation pipeline.
#[derive(Debug, Error)]
pub enum KcdeError {
    #[error("dataset is empty")]
    EmptyDataset,

    #[error("dataset needs at least {required} points, got {actual}")]
    TooFewPoints { required: usize, actual: usize },

    #[error("non-finite value in column {column} at row {row}")]
    NonFiniteValue { row: usize, column: String },

    #[error("column {column} has zero variance; constant columns cannot be scaled")]
    ZeroVariance { column: String },

    /// The query point lies outside the support of every x-kernel, so the
    /// conditional density is undefined there.
    #[error("query point is outside the support of all kernels; no estimate is defined there")]
    UnsupportedQuery,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "all {candidates} bandwidth candidates diverged; retry with a larger h-max (was {h_max})"
    )]
    AllCandidatesDiverged { candidates: usize, h_max: f64 },

    #[error("no supported held-out points; metrics are undefined")]
    NoSupportedPoints,

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<KcdeError>,
    },
}

pub type Result<T> = std::result::Result<T, KcdeError>;
