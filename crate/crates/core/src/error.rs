use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("index out of range: {name}={value} not in 1..={n}")]
    IndexOutOfRange {
        name: &'static str,
        value: usize,
        n: usize,
    },

    #[error("regime error: {0}")]
    Regime(String),

    #[error("series did not reach the requested tolerance within {cap} terms per axis")]
    NoConvergence { cap: u64 },

    #[error("circulant embedding is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NonPsdEmbedding { min_eigenvalue: f64 },

    #[error("grid size n={n} exceeds the memory budget for {what}")]
    TooLarge { n: usize, what: &'static str },

    #[error("input mismatch: {0}")]
    Mismatch(String),

    #[error("stream provenance violation: {0}")]
    Provenance(String),

    #[error("weight function {0} has no usable second derivative")]
    NoSecondDerivative(String),

    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
