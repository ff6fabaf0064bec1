use thiserror::Error;

/// Errors raised while building or solving a discretisation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {what} has length {actual}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("singular matrix: no usable pivot at elimination step {step} of {n}")]
    SingularMatrix { step: usize, n: usize },

    #[error("linear solve inaccurate: backward error {residual:.3e} exceeds {bound:.1e}")]
    InaccurateSolve { residual: f64, bound: f64 },

    #[error("sparse factorisation failed: {0}")]
    Factorization(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
