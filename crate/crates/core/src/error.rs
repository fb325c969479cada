use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown potential `{0}`")]
    UnknownPotential(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("grid needs at least 4 intervals, got {0}")]
    GridTooSmall(usize),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("field violates spectral floor {floor} at node {node} (min eigenvalue {min_eig})")]
    BelowFloor { node: usize, min_eig: f64, floor: f64 },

    #[error("operator is not positive definite (factorization failed at interior node {node})")]
    Indefinite { node: usize },

    #[error("log-determinant underflow: {0}")]
    LogDetUnderflow(String),

    #[error("point {0:?} is not a declared critical point")]
    NotCritical(Vec<f64>),

    #[error("Gauss-Hermite quadrature under-resolved (relative change {0:e} on order doubling)")]
    UnderResolved(f64),

    #[error("node index {index} out of range (valid: {lo}..={hi})")]
    IndexOutOfRange { index: usize, lo: usize, hi: usize },

    #[error("non positive semi-definite covariance block at node {0}")]
    NotPsd(usize),
}

impl Error {
    /// True for failures of the numerics on admissible input (as opposed to
    /// rejected input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Indefinite { .. } | Error::LogDetUnderflow(_) | Error::UnderResolved(_) | Error::NotPsd(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
