//! Error types shared across the crate.

use crate::estimator::EstimatorTrace;
use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty point set")]
    EmptySet,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("entry {index} of input vector is not finite")]
    NonFiniteEntry { index: usize },

    #[error("duplicate point id {0}")]
    DuplicateId(u64),

    #[error("matrix is not symmetric (max |M - M^T| = {max_asym:e}, tolerance {tol:e})")]
    NotSymmetric { max_asym: f64, tol: f64 },

    #[error("requested subspace rank {p} exceeds dimension {d}")]
    RankRequest { p: usize, d: usize },

    /// The p-th eigenvalue fell below the numerical floor while the filter
    /// loop was still asked to whiten with it. Carries the partial trace
    /// when raised from inside the estimation loop.
    #[error("eigenvalue {value:e} at rank {p} is below the numerical floor {floor:e}")]
    DegenerateEigenvalue {
        p: usize,
        value: f64,
        floor: f64,
        trace: Option<Box<EstimatorTrace>>,
    },

    #[error("prefilter removed every sample")]
    AllFiltered,

    #[error("alpha_clean must lie in (0, 1], got {0}")]
    InvalidAlpha(f64),

    #[error("q must satisfy 0 <= q < m, got q={q}, m={m}")]
    InvalidQ { q: usize, m: usize },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid contamination spec: {0}")]
    InvalidSpec(String),

    #[error("unsupported loss model: {0}")]
    UnsupportedLoss(String),

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("config validation error: {0}")]
    Validation(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable kind tag, used by the CLI error envelope.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptySet => "empty_set",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NonFiniteEntry { .. } => "non_finite_entry",
            Error::DuplicateId(_) => "duplicate_id",
            Error::NotSymmetric { .. } => "not_symmetric",
            Error::RankRequest { .. } => "rank_request",
            Error::DegenerateEigenvalue { .. } => "degenerate_eigenvalue",
            Error::AllFiltered => "all_filtered",
            Error::InvalidAlpha(_) => "invalid_alpha",
            Error::InvalidQ { .. } => "invalid_q",
            Error::InvalidParams(_) => "invalid_params",
            Error::InvalidSpec(_) => "invalid_spec",
            Error::UnsupportedLoss(_) => "unsupported_loss",
            Error::Parse(_) => "parse_error",
            Error::Validation(_) => "validation_error",
            Error::Io(_) => "io_error",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
