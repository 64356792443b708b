//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("missing column `{0}` in CSV header")]
    MissingColumn(String),

    #[error("cannot parse cell in column `{column}` at data row {row}: {detail}")]
    ParseCell {
        column: String,
        row: usize,
        detail: String,
    },

    #[error("malformed CSV: {0}")]
    MalformedCsv(String),

    #[error("degenerate column `{0}`: zero sample standard deviation")]
    DegenerateColumn(String),

    #[error("sizing error: {0}")]
    Sizing(String),

    #[error("matched design matrix has rank {rank}, need {needed} (existence hypothesis violated)")]
    RankDeficient { rank: usize, needed: usize },

    #[error("density not differentiable at t = {0} (exponent 1 kink)")]
    NonDifferentiable(f64),

    #[error("unsupported derivative order {order} for exponent {alpha}")]
    UnsupportedOrder { order: usize, alpha: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("matrix is singular or not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("estimation failed: {0}")]
    EstimationFailed(String),

    #[error("objective not finite at starting point")]
    BadStart,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
