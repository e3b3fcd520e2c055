use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("probabilities must be non-negative and sum to 1 (sum = {0})")]
    InvalidDistribution(f64),
    #[error("no admissible sequence: {0}")]
    EmptyShapingSet(String),
    #[error("input index out of range for matcher with {0} input bits")]
    IndexOutOfRange(usize),
    #[error("sequence is not in the matcher's codebook: {0}")]
    NotInCodebook(String),
    #[error("ill-conditioned fit: {0}")]
    IllConditioned(String),
    #[error("rank deficient system: {0}")]
    RankDeficient(String),
    #[error("numerical instability: {0}")]
    Unstable(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
