use thiserror::Error;

/// Errors produced by the estimation toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("insufficient failure samples: found {found}, need at least {required}")]
    InsufficientFailureSamples { found: usize, required: usize },

    #[error("failure samples are degenerate; covariance has a zero-variance direction")]
    DegenerateSamples,

    #[error("biasing density vanishes at a drawn sample; the density is broken")]
    ZeroBiasingDensity,

    #[error("coefficient of variation is undefined for a zero estimate")]
    UndefinedCv,

    #[error("covariance matrix is singular or ill-conditioned (condition estimate {condition:e}); fall back to diagonal fusion")]
    SingularCovariance { condition: f64 },

    #[error("covariance matrix is not positive semidefinite")]
    IndefiniteCovariance,

    #[error("unknown benchmark: {0}")]
    UnknownBenchmark(String),

    #[error("density cannot be mapped to the unit hypercube: {0}")]
    NotTransformable(String),

    #[error("model evaluation failed: {0}")]
    Model(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
