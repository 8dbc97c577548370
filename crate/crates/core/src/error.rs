use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ArtError {
    #[error("invalid input domain: {0}")]
    InvalidDomain(String),

    #[error("invalid test point: {0}")]
    InvalidPoint(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("index is empty")]
    EmptyIndex,

    #[error("index is at capacity ({capacity}); rebuild with a larger capacity first")]
    CapacityExceeded { capacity: usize },

    #[error("unknown node id {0}")]
    UnknownNode(usize),

    #[error("failure region construction failed: {0}")]
    RegionConstruction(String),

    #[error("system under test: {0}")]
    External(String),
}

pub type Result<T, E = ArtError> = std::result::Result<T, E>;
