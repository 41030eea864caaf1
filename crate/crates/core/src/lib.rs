//! Reference-based learned image codec, inference only.
//!
//! The crate is `no_std` (it needs `alloc`) and holds everything that is pure
//! computation: tensors and layers, GSDN/IGSDN normalization, the discretized
//! Gaussian entropy model, global reference search, a byte-wise range coder
//! and the progressive encode/decode pipeline. File formats, image IO and the
//! command line live in the `gric` crate.
//!
//! Images are `(3, H, W)` tensors with values in `[0, 1]`. Latents are
//! integer grids of shape `(M, H/16, W/16)` coded in raster order, each
//! position conditioned on a local context model, on the most similar
//! previously decoded patch and (in [`EntropyMode::Full`]) on a hyperprior.
#![no_std]

extern crate alloc;

pub mod codec;
pub mod coder;
mod error;
pub mod fixtures;
pub mod gsdn;
pub mod nn;
pub mod probability;
pub mod reference;
pub mod rng;
pub mod tensor;

pub use codec::{
    Bitstream, Codec, DecodedImage, EncodedImage, EntropyMode, LatentGrid, ModelConfig, ModelDims,
    ModelWeights, RateEstimate, RdPoint,
};
pub use error::{Error, Result};
pub use tensor::Tensor;
