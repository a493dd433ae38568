//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("no closed-form support function for {0}")]
    NoClosedFormSupport(&'static str),

    #[error("minkowski membership needs support-capable summands (got {0})")]
    MinkowskiUnsupported(&'static str),

    #[error("body is unbounded; operation needs a finite bounding radius")]
    Unbounded,

    #[error(
        "requested accuracy {requested:.3e} unreachable; best value {value:.12} with bound {bound:.3e}"
    )]
    Accuracy {
        value: f64,
        bound: f64,
        requested: f64,
    },

    #[error("containment violated: bounding radius {radius:.6} exceeds limit {limit:.6}")]
    Containment { radius: f64, limit: f64 },

    #[error("matrix is not orthogonal: max |U^T U - I| entry = {defect:.3e}")]
    NotOrthogonal { defect: f64 },

    #[error("matrix is not nonnegative definite: eigenvalue {0:.3e}")]
    NotNonnegDefinite(f64),

    #[error("tensor quadrature limited to dimension <= {max}, got {got}")]
    QuadratureDim { max: usize, got: usize },

    #[error("permutation scan limited to dimension <= {max}, got {got}")]
    PermutationDim { max: usize, got: usize },

    #[error("orthant enumeration limited to dimension <= {max}, got {got}")]
    OrthantDim { max: usize, got: usize },
}

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::ContractViolation(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
