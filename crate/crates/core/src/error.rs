use thiserror::Error;

/// Errors produced by the bound, spectral, and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("eigenvalue iteration did not converge (residual {residual:e})")]
    Convergence { residual: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("iteration cap of {cap} steps exceeded before reaching threshold {threshold}; try a larger eps or delta")]
    IterationCap { cap: u64, threshold: f64 },

    #[error(
        "bound unreachable under this policy: information stalls along direction {direction:?}"
    )]
    Unreachable { direction: Vec<f64> },

    #[error("horizon exhausted at t={horizon} with success fraction {final_fraction}")]
    HorizonExhausted { horizon: usize, final_fraction: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
