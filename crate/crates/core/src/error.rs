use thiserror::Error;

/// Errors raised by the core numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid manifold: {0}")]
    InvalidManifold(String),

    #[error("invalid metric: {0}")]
    InvalidMetric(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("operation not supported on this manifold: {0}")]
    Unsupported(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("{method} did not converge after {iterations} iterations (residuals: {residuals:?})")]
    NoConvergence {
        method: &'static str,
        iterations: usize,
        residuals: Vec<f64>,
    },

    #[error("Newton iteration exceeded {max_iter} iterations (residual history: {history:?})")]
    MaxIterExceeded { max_iter: usize, history: Vec<f64> },

    #[error("singular Jacobian (relative pivot {pivot:e}) at residual {residual:e}")]
    SingularJacobian { pivot: f64, residual: f64 },

    #[error("line search failed after {halvings} halvings at residual {residual:e}")]
    LineSearchFailed { halvings: usize, residual: f64 },

    #[error("step size rejected {halvings} times (energy increase {increase:e})")]
    StepRejected { halvings: usize, increase: f64 },

    #[error("no nonconstant solution: {0}")]
    NotFound(String),
}

pub type Result<T> = std::result::Result<T, Error>;
