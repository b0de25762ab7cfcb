use std::io;

use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numeric instability: {0}")]
    NumericInstability(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Wav(#[from] hound::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err<R>(msg: impl Into<String>) -> Result<R> {
    Err(Error::Shape(msg.into()))
}

pub(crate) fn invalid<R>(msg: impl Into<String>) -> Result<R> {
    Err(Error::InvalidArgument(msg.into()))
}
