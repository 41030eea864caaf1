//! File formats, image IO and the command-line tool around `gric-core`.

pub mod cli;
pub mod container;
pub mod error;
pub mod image_io;
pub mod report;
pub mod selfcheck;
pub mod weights_file;

pub use error::{GricError, Result};
