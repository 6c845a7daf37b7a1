use thiserror::Error;

/// Errors raised by models, filters and inference drivers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Every log-weight was `-inf`: the ensemble has fully degenerated.
    #[error("all importance weights are zero")]
    AllWeightsZero,
    #[error("ensemble weights are not normalized")]
    NotNormalized,
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("nudging budget M = {m} exceeds ensemble size N = {n}")]
    BudgetExceedsN { m: usize, n: usize },
    #[error("likelihood gradient has non-finite entries")]
    NonFiniteGradient,
    #[error("model not supported by this filter: {0}")]
    UnsupportedModel(&'static str),
    #[error("innovation covariance is not positive definite")]
    SingularInnovation,
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("price at index {index} is not positive ({value})")]
    NonPositivePrice { index: usize, value: f64 },
    #[error("chain of length {len} is too short (need more than {needed})")]
    InsufficientChain { len: usize, needed: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
