use alloc::string::String;

use crate::coder::CoderError;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A layer or tensor does not have the shape its role requires.
    #[error("{layer}: {detail}")]
    Config { layer: String, detail: String },
    #[error("contract violation: {0}")]
    Contract(&'static str),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("bitstream was produced with different weights")]
    HashMismatch,
    #[error("image side {0} is outside 1..=65536")]
    ImageSize(usize),
    #[error("malformed bitstream: {0}")]
    Bitstream(&'static str),
    #[error(transparent)]
    Coder(#[from] CoderError),
}

impl Error {
    pub(crate) fn config(layer: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Config {
            layer: layer.into(),
            detail: detail.into(),
        }
    }
}
