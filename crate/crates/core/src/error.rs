use thiserror::Error;

/// Errors raised by validation and numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("elliptic regime, no real eigenvalues (alpha = {0})")]
    Elliptic(f64),
    #[error("zero direction vector")]
    ZeroVector,
    #[error("orbit did not return to the central square within {0} iterations")]
    NonReturned(usize),
    #[error("segment matches neither the one-square nor the two-square return pattern")]
    UnclassifiedReturn,
    #[error("no sign change of lhs - 1 on [{0}, {1}]")]
    NoRoot(f64, f64),
    #[error("no expansion certificate within {0} iterations")]
    NoCertificate(usize),
    #[error("invalid cube: {0}")]
    InvalidCube(String),
}

pub type Result<T> = std::result::Result<T, Error>;
