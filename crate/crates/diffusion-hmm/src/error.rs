use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid probability vector: {0}")]
    InvalidProbability(String),

    #[error("invalid transition model: {0}")]
    InvalidTransition(String),

    #[error("transition model is not ergodic: {0}")]
    NonErgodic(String),

    #[error("invalid likelihood model: {0}")]
    InvalidLikelihood(String),

    #[error("observation outside likelihood support: {0}")]
    OutOfSupport(String),

    #[error("log-likelihoods are unbounded: {0}")]
    UnboundedLikelihood(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid combination matrix: {0}")]
    InvalidCombination(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("all hypotheses have zero posterior mass")]
    DegeneratePosterior,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("density-evolution grid too small: {0}")]
    GridLeakage(String),

    #[error("problem too large for grid-based evaluation: {0}")]
    Intractable(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}
