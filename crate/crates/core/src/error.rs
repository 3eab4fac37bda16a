use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid thermal context: {0}")]
    InvalidContext(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("dimension {dim} exceeds cap {cap} (set THERMOFLUX_DIM_CAP to raise it)")]
    DimensionCap { dim: u128, cap: usize },
    #[error("enumeration of {count} items exceeds cap {cap}; use typical-shell mode")]
    EnumerationCap { count: u128, cap: u128 },
    #[error("support violation: {mass:.3e} of the first argument lies outside the support of the second")]
    SupportViolation { mass: f64 },
    #[error("operator is not permutation invariant (deviation {deviation:.3e})")]
    NotPermutationInvariant { deviation: f64 },
    #[error("distribution lies on a block boundary between {first:?} and {second:?}")]
    BlockBoundary { first: Vec<usize>, second: Vec<usize> },
    #[error("injection capacity exceeded for target class {target:?}")]
    CapacityExceeded { target: Vec<i64> },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("parse error: {0}")]
    Parse(String),
}
