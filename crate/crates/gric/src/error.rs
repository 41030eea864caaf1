use std::io;

use gric_core::Error as CoreError;

/// Failures of the command-line tools, grouped by exit code.
#[derive(Debug, thiserror::Error)]
pub enum GricError {
    #[error("input: {0}")]
    Input(String),
    #[error("weights: {0}")]
    Weights(String),
    #[error("stream: {0}")]
    Stream(String),
    #[error("{context}: {source}")]
    Io { context: String, source: io::Error },
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl GricError {
    pub fn io(context: impl Into<String>, source: io::Error) -> Self {
        GricError::Io {
            context: context.into(),
            source,
        }
    }

    /// 2 input, 3 weights, 4 stream.
    pub fn exit_code(&self) -> i32 {
        match self {
            GricError::Input(_) | GricError::Io { .. } => 2,
            GricError::Weights(_) => 3,
            GricError::Stream(_) => 4,
            GricError::Core(e) => match e {
                CoreError::ImageSize(_) | CoreError::Contract(_) => 2,
                CoreError::Config { .. } | CoreError::InvalidWeights(_) | CoreError::HashMismatch => 3,
                CoreError::Bitstream(_) | CoreError::Coder(_) => 4,
            },
        }
    }
}

pub type Result<T, E = GricError> = std::result::Result<T, E>;
