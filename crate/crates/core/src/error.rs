use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degree overflow: {0} + {1} exceeds 7")]
    DegreeOverflow(usize, usize),

    #[error("degree mismatch: expected {expected}, got {found}")]
    DegreeMismatch { expected: usize, found: usize },

    #[error("invalid degree {0} for this operation")]
    InvalidDegree(usize),

    #[error(
        "coefficient vector of length {found} does not match degree {degree} (expected {expected})"
    )]
    CoefficientLength {
        degree: usize,
        expected: usize,
        found: usize,
    },

    #[error("invalid multi-index {0:?}: labels must be strictly increasing in 1..=7")]
    InvalidMultiIndex(Vec<usize>),

    #[error("matrix is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("metric is not positive definite (smallest eigenvalue {0:e})")]
    NotPositiveDefinite(f64),

    #[error("3-form is not a positive G2-form for the fixed orientation: {0}")]
    NotG2Form(String),

    #[error("recovery of phi from psi failed after {iterations} Newton iterations (residual {residual:e})")]
    RecoveryFailed { iterations: usize, residual: f64 },

    #[error(
        "Lie algebra `{0}` is not unimodular; invariant codifferential is not an adjoint of d"
    )]
    NonUnimodular(String),

    #[error("invalid Lie algebra definition: {0}")]
    InvalidAlgebra(String),

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("base point is not static: rhs norm {0:e}")]
    NotStatic(f64),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
