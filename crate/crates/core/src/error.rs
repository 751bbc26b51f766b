use thiserror::Error;

/// Errors raised by the certification library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A majorant was evaluated outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Adaptive quadrature did not reach the requested tolerance.
    #[error("quadrature did not converge on [{lo}, {hi}] within {max_subdivisions} subdivisions")]
    Quadrature {
        lo: f64,
        hi: f64,
        max_subdivisions: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A pivot fell below the relative singularity threshold.
    #[error("singular matrix: pivot {pivot:e} at column {column} below threshold {threshold:e}")]
    SingularMatrix {
        column: usize,
        pivot: f64,
        threshold: f64,
    },

    #[error("jacobian at the root is singular")]
    SingularJacobian,

    #[error("degenerate sampling grid: every denominator is below 1e-14")]
    DegenerateGrid,

    #[error("radius condition fails already at r = {r:e} (g = {g})")]
    InfeasibleAtOrigin { r: f64, g: f64 },

    #[error("negative discriminant {0} in closed-form radius")]
    NegativeDiscriminant(f64),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("trace has no known root")]
    MissingRoot,

    #[error("denominator 1 - integral(L) is non-positive ({0})")]
    DenominatorNonpositive(f64),

    #[error("q-factors are not contractive: q1 = {q1}, q2 = {q2}")]
    InvalidQ { q1: f64, q2: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
