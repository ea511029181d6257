use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid belief: {0}")]
    InvalidBelief(String),

    #[error("invalid probability {value} for entry {index}")]
    InvalidProbability { index: usize, value: f64 },

    #[error("invalid horizon: {0}")]
    InvalidHorizon(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("tree problem has no branches")]
    EmptyProblem,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{count} uncertain hypotheses exceed the enumeration cap of {cap}")]
    TooManyHypotheses { count: usize, cap: usize },

    #[error("non-finite value in branch {branch} during {stage}")]
    NonFinite { branch: usize, stage: &'static str },

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
