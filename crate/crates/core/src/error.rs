use thiserror::Error;

/// Errors produced by the estimation, sampling and forecasting routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("degrees of freedom {dof} must exceed {bound}")]
    DegreesOfFreedom { dof: f64, bound: f64 },

    #[error("rank deficient matrix: {0}")]
    RankDeficient(String),

    #[error("filtering failed at step {step}: every predictive density is zero")]
    FilterFailure { step: usize },

    #[error("enumeration over {paths} regime paths exceeds the limit of {limit}")]
    EnumerationBound { paths: f64, limit: usize },

    #[error("transition matrix is not ergodic: {0}")]
    NonErgodic(String),

    #[error("regime {0} is absorbing (p_jj = 1)")]
    AbsorbingRegime(usize),

    #[error("algebraic forms disagree: {0}")]
    Consistency(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{context}: {source}")]
    Csv {
        context: String,
        #[source]
        source: csv::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
