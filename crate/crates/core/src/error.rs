use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} at column {column})")]
    NotPositiveDefinite { column: usize, pivot: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("row {row} of the transition matrix has no admissible entry")]
    AllZeroRow { row: usize },

    #[error("forward recursion normalizer vanished at step {step}")]
    ZeroLikelihoodStep { step: usize },

    #[error("stationary distribution of phase {phase} is not unique")]
    NonErgodicCycle { phase: usize },

    #[error("degenerate mesh: {0}")]
    DegenerateMesh(String),

    #[error("optimizer did not converge within {iterations} iterations")]
    MaxIterationsExceeded { iterations: usize },

    #[error("objective is not finite")]
    NonFiniteObjective,

    #[error("derivative is not finite")]
    NonFiniteDerivative,

    #[error("metric grid has no cells inside the data hull")]
    DegenerateGrid,

    #[error("invalid probability vector: {0}")]
    InvalidProbabilities(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

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

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
