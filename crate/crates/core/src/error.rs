use thiserror::Error;

/// Errors raised across the simulation, likelihood and decoding layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("missing information: {0}")]
    MissingInformation(String),
    #[error("inconsistent record: {0}")]
    InconsistentRecord(String),
    #[error("corrupted record: {0}")]
    Contradiction(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("degenerate distribution: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
