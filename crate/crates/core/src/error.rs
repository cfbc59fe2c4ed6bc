use thiserror::Error;

/// Failures of the adaptive quadrature engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadratureError {
    #[error(
        "quadrature did not converge after {subdivisions} subdivisions: \
         estimate {estimate:e}, error estimate {error:e}, requested {requested:e}"
    )]
    NotConverged {
        estimate: f64,
        error: f64,
        requested: f64,
        subdivisions: usize,
    },
    #[error("integrand is not finite near x = {at:e}")]
    NonFinite { at: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix `{name}` is not Hermitian (max |M - M^dagger| = {defect:e})")]
    NotHermitian { name: String, defect: f64 },
    #[error("invalid density matrix: {0}")]
    InvalidState(String),
    #[error("unsupported combination: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("step size underflow at t = {t:e} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("positivity violated: minimum eigenvalue {min_eigenvalue:e}")]
    PositivityViolation { min_eigenvalue: f64 },
    #[error("potential table: {0}")]
    Table(String),
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
