use alloc::string::String;

use crate::oracle::ElementId;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("element {0} is not in the oracle's universe")]
    UnknownElement(ElementId),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed stream at t={t}: {reason}")]
    MalformedStream { t: usize, reason: String },
    #[error("element {0} appears in the stream but has no prediction")]
    MissingPrediction(ElementId),
    #[error("engine state error: {0}")]
    State(String),
    #[error("brute force refused: {subsets} candidate subsets exceed the limit of {limit}")]
    TooLarge { subsets: u128, limit: u128 },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
