use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid loss function {id}: {reason}")]
    InvalidLoss { id: usize, reason: String },
    #[error("invalid model `{name}`: {reason}")]
    InvalidModel { name: String, reason: String },
    #[error("invalid model family: {0}")]
    InvalidFamily(String),
    #[error("domain mismatch: {0}")]
    DomainMismatch(&'static str),
    #[error("empty sample")]
    EmptySample,
    #[error("claimed minimizer is not minimal: excess {0} is negative")]
    InvalidMinimizer(f64),
    #[error("parameter out of range: {0}")]
    Parameter(String),
    #[error("selection rule failed: {0}")]
    Rule(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
