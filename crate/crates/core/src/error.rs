use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("stream index {index} out of range for {streams} streams")]
    IndexOutOfRange { index: usize, streams: usize },

    #[error("fixed point did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("saddle point unstable: 1 - Mt*Mr = {margin:e} ({context})")]
    StabilityViolation { margin: f64, context: String },

    #[error("finite-difference step {step:e} leaves the stability region (limit {limit:e})")]
    StepTooLarge { step: f64, limit: f64 },

    #[error("monte carlo batch aborted after {completed} of {requested} trials: {reason}")]
    Resource {
        completed: u64,
        requested: u64,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Numerical failures (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. } | Error::StabilityViolation { .. } | Error::StepTooLarge { .. }
        )
    }
}
