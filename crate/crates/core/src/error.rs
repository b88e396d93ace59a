use alloc::string::String;

use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("capacity {0} is not a power of two")]
    NotPowerOfTwo(u64),
    #[error("invalid parameters: {0}")]
    InvalidParams(&'static str),
    #[error("parameter search gave up after {0} attempts")]
    SetupTimeout(u32),
    #[error("input of {len} bytes exceeds capacity of {cap} bytes")]
    Oversize { len: usize, cap: usize },
    #[error("level {0} is empty")]
    EmptyLevel(u32),
    #[error("index {index} out of range for length {len}")]
    OutOfRange { index: u64, len: u64 },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("linear system is singular")]
    Singular,
    #[error("need {need} symbols, have {have}")]
    Insufficient { need: usize, have: usize },
    #[error("malformed encoding: {0}")]
    Decode(&'static str),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("signature backend failure")]
    Signature,
    #[error("extraction failed: {0}")]
    Extraction(String),
}

impl Error {
    pub(crate) fn verification(msg: impl Into<String>) -> Self {
        Error::Verification(msg.into())
    }

    pub(crate) fn protocol(msg: impl Into<String>) -> Self {
        Error::Protocol(msg.into())
    }
}
