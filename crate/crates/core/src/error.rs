use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite input")]
    NonFinite,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("inverse out of range")]
    InverseOutOfRange,
    #[error("map does not fix the origin with diagonal derivative: {0}")]
    NotDiagonalAtOrigin(String),
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("eigenvalue hypothesis violated: {0}")]
    EigenvalueHypothesis(String),
    #[error("insufficient convergence")]
    InsufficientConvergence,
    #[error("witness depth exceeded")]
    WitnessDepthExceeded,
    #[error("graph breaks down")]
    GraphBreaksDown,
    #[error("not a graph over this face at node {node}: {detail}")]
    NotAGraph { node: usize, detail: String },
    #[error("sampler failure: {0}")]
    SamplerFailure(String),
    #[error("base containment check failed at {0}")]
    ContainmentFailed(String),
    #[error("alpha left the representable range at stage {0}")]
    AlphaUnderflow(usize),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
