use thiserror::Error;

/// Errors raised across the modeling, control and simulation layers.
#[derive(Debug, Error)]
pub enum PlatoonError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("kernel matrix is not positive definite (signal_variance={signal_variance}, length_scales={length_scales:?}, noise_variance={noise_variance})")]
    IllConditionedKernel {
        signal_variance: f64,
        length_scales: Vec<f64>,
        noise_variance: f64,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PlatoonError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(PlatoonError::InvalidArgument(msg.into()))
}
