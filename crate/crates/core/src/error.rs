use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("effective sample size {ess:.1} is below the floor {floor:.1}")]
    LowEffectiveSampleSize { ess: f64, floor: f64 },

    #[error("rejection sampler gave up after {tries} proposals (acceptance rate estimate {rate:.3e})")]
    RejectionExhausted { tries: usize, rate: f64 },

    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("too few samples: need at least {min}, got {got}")]
    TooFewSamples { min: usize, got: usize },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
