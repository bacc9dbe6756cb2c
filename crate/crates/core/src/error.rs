use alloc::boxed::Box;
use alloc::string::String;

/// Errors raised by model construction and sampling.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is ill-conditioned: reciprocal condition number {rcond:e} below {threshold:e}")]
    IllConditioned { rcond: f64, threshold: f64 },

    #[error("rank-deficient linear map: only {rank} of {cols} columns are independent")]
    RankDeficient { rank: usize, cols: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error(
        "truncated sampling failed: {accepted} of {attempts} draws exceeded the bound \
         (acceptance rate estimate {acceptance:e})"
    )]
    TruncationFailure {
        attempts: usize,
        accepted: usize,
        acceptance: f64,
    },

    #[error("precision matrix for `{block}` is not positive definite after jitter")]
    NotPositiveDefinite { block: &'static str },

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("categorical column `{0}` has fewer than two levels")]
    SingleLevel(String),

    #[error("column `{0}` has zero variance and cannot be standardized")]
    ZeroVariance(String),

    #[error("spatial basis requested but the dataset has no coordinates")]
    MissingCoords,

    #[error("eigenvalue computation did not converge")]
    NoConvergence,

    #[error("fold {fold} leaves {train} training rows, at least {needed} required")]
    FoldTooSmall {
        fold: usize,
        train: usize,
        needed: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("chain {chain} failed at iteration {iteration} while updating {block}: {source}")]
    Sampler {
        chain: u64,
        iteration: usize,
        block: &'static str,
        source: Box<Error>,
    },
}

impl Error {
    /// Innermost error, skipping any context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Sampler { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
