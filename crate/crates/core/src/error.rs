use thiserror::Error;

/// Errors produced by the numerical layers of the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("block partition sums to {sum}, operator has dimension {dim}")]
    InconsistentPartition { sum: usize, dim: usize },

    #[error("conjugation is not an involution at index {index}")]
    InvalidConjugation { index: usize },

    #[error("matrix exponential overflow: scaled norm {norm:e} is not representable")]
    ExpOverflow { norm: f64 },

    #[error("term growth cap exceeded: {what} {value} > {cap}")]
    TermGrowth {
        what: &'static str,
        value: usize,
        cap: usize,
    },

    #[error("order {order} outside supported range (max {max})")]
    OrderOutOfRange { order: usize, max: usize },

    #[error("missing coefficient: {0}")]
    MissingCoefficient(String),

    #[error("propagator did not reach tolerance {tol:e} within {halvings} halvings (last difference {last:e})")]
    ToleranceNotReached { tol: f64, halvings: u32, last: f64 },

    #[error("eigenvalue {re:+.3e}{im:+.3e}i lies within {margin:e} of the logarithm branch cut")]
    BranchCut { re: f64, im: f64, margin: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
