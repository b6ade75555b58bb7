use thiserror::Error;

/// Errors produced by the numerical kernels, the training stack and the
/// reference solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("quadrature did not converge: best estimate {estimate:e}, error bound {error_bound:e}")]
    QuadratureConvergence { estimate: f64, error_bound: f64 },

    #[error("conjugate gradient stalled after {iterations} iterations, residual {residual:e}")]
    CgConvergence { iterations: usize, residual: f64 },

    #[error("non-finite value in term `{tag}`")]
    NonFinite { tag: String },

    #[error("relative error undefined: exact solution has zero norm on the test grid")]
    ZeroNorm,

    #[error("malformed parameter snapshot: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
