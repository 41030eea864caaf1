//! End-to-end image codec: transforms, hyperprior, progressive entropy model
//! and the raster-order coding loops.

mod entropy;
mod latent;
mod network;
mod weights;

use alloc::vec;
use alloc::vec::Vec;

pub use entropy::{EntropyMode, EntropyTrace, PositionTrace, StageParams};
pub use latent::{quantize, quantize_value, LatentGrid};
pub use network::sigma_from_raw;
pub use weights::{
    architecture, LayerKind, LayerShape, ModelConfig, ModelDims, ModelWeights, WeightInit, CONTEXT_KERNEL,
    HYPER_STRIDE, LATENT_STRIDE,
};

use crate::coder::{Decoder, Encoder};
use crate::error::{Error, Result};
use crate::probability::{bits_per_pixel, QuantizedPmf};
use crate::tensor::Tensor;
use entropy::Progressive;
use network::Network;

/// Largest accepted image side.
pub const MAX_SIDE: usize = 1 << 16;

/// Logical content of a compressed image. Byte serialization with a
/// checksum is done by the container writer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bitstream {
    pub mode: EntropyMode,
    pub height: usize,
    pub width: usize,
    pub padded_height: usize,
    pub padded_width: usize,
    pub weights_hash: [u8; 32],
    /// Range-coded hyper-latents; empty unless the mode uses the hyperprior.
    pub hyper: Vec<u8>,
    pub latent: Vec<u8>,
}

impl Bitstream {
    /// Bits of the two coded streams.
    pub fn payload_bits(&self) -> usize {
        8 * (self.hyper.len() + self.latent.len())
    }

    pub fn latent_dims(&self) -> (usize, usize) {
        (self.padded_height / LATENT_STRIDE, self.padded_width / LATENT_STRIDE)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncodedImage {
    pub bitstream: Bitstream,
    pub latents: LatentGrid,
    pub hyper_latents: Option<LatentGrid>,
    pub trace: EntropyTrace,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodedImage {
    /// Reconstruction at the true size, values in `[0, 1]`.
    pub image: Tensor,
    pub latents: LatentGrid,
    pub hyper_latents: Option<LatentGrid>,
    pub trace: EntropyTrace,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateEstimate {
    pub mode: EntropyMode,
    pub latent_bits: f64,
    pub hyper_bits: f64,
    pub total_bits: f64,
    pub bpp: f64,
    pub latent_height: usize,
    pub latent_width: usize,
    /// Bits of every position under the coding parameters, raster order.
    pub position_bits: Vec<f64>,
    /// `stage_bits[s][i]`: bits of position `i` under stage `s + 1`.
    pub stage_bits: Vec<Vec<f64>>,
    pub trace: EntropyTrace,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RdPoint {
    pub bpp: f64,
    /// Mean squared error on the `[0, 1]` scale.
    pub mse: f64,
    pub psnr: f64,
    pub lambda: f64,
    /// `bpp + lambda * mse`.
    pub loss: f64,
}

/// PSNR in dB for a mean squared error `d` on the 0..255 scale. Identical
/// images give infinity.
pub fn psnr(d: f64) -> f64 {
    if d <= 0.0 {
        f64::INFINITY
    } else {
        10.0 * libm::log10(255.0 * 255.0 / d)
    }
}

pub fn mse(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::config("mse", "image shapes differ"));
    }
    let n = a.len().max(1) as f64;
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| {
            let d = *x as f64 - *y as f64;
            d * d
        })
        .sum::<f64>()
        / n)
}

fn padded(n: usize) -> usize {
    n.div_ceil(LATENT_STRIDE) * LATENT_STRIDE
}

fn table_for(params: crate::probability::QuantizedParams, net: &Network) -> QuantizedPmf {
    QuantizedPmf::from_quantized(params, &net.scale_table, net.config.latent_support)
}

/// Inference-ready codec built from validated weights.
#[derive(Clone, Debug)]
pub struct Codec {
    net: Network,
    hash: [u8; 32],
}

struct Forward {
    latents: LatentGrid,
    hyper_latents: Option<LatentGrid>,
    psi: Option<Tensor>,
}

impl Codec {
    pub fn new(weights: &ModelWeights) -> Result<Self> {
        Ok(Self {
            net: Network::build(weights)?,
            hash: weights.hash,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.net.config
    }

    pub fn weights_hash(&self) -> [u8; 32] {
        self.hash
    }

    fn check_image(image: &Tensor) -> Result<(usize, usize)> {
        let (c, h, w) = image.dims3()?;
        if c != 3 {
            return Err(Error::config("image", alloc::format!("expected 3 channels, got {c}")));
        }
        for side in [h, w] {
            if side == 0 || side > MAX_SIDE {
                return Err(Error::ImageSize(side));
            }
        }
        Ok((h, w))
    }

    /// Analysis transform of a `(3, H, W)` image whose sides are multiples of
    /// 16. Returns `(M, H/16, W/16)`.
    pub fn analyze(&self, image: &Tensor) -> Result<Tensor> {
        let (h, w) = Self::check_image(image)?;
        if h % LATENT_STRIDE != 0 || w % LATENT_STRIDE != 0 {
            return Err(Error::config("analysis", "image sides must be multiples of 16"));
        }
        self.net.analyze(image)
    }

    /// Synthesis transform at the padded size, clamped to `[0, 1]`.
    pub fn synthesize(&self, latents: &LatentGrid) -> Result<Tensor> {
        self.check_latents(latents)?;
        Ok(self.net.synthesize(&latents.to_tensor())?.map(|v| v.clamp(0.0, 1.0)))
    }

    fn check_latents(&self, latents: &LatentGrid) -> Result<()> {
        let m = self.net.config.dims.latent_channels;
        if latents.channels() != m || latents.height() == 0 || latents.width() == 0 {
            return Err(Error::config(
                "latents",
                alloc::format!("expected {m} channels, got shape {:?}", latents.shape()),
            ));
        }
        Ok(())
    }

    /// Hyper-analysis of the quantized latents.
    pub fn hyper_analyze(&self, latents: &LatentGrid) -> Result<Tensor> {
        self.check_latents(latents)?;
        self.net.hyper_analyze(&latents.to_tensor())
    }

    /// Hyper-synthesis cropped to the latent grid `(height, width)` it must
    /// align with.
    pub fn hyper_synthesize(&self, hyper_latents: &LatentGrid, height: usize, width: usize) -> Result<Tensor> {
        let z = self.net.config.dims.hyper_channels;
        if hyper_latents.channels() != z
            || hyper_latents.height() != height.div_ceil(HYPER_STRIDE)
            || hyper_latents.width() != width.div_ceil(HYPER_STRIDE)
        {
            return Err(Error::config(
                "hyper_synthesis",
                alloc::format!(
                    "hyper-latents {:?} do not match latents {height}x{width}",
                    hyper_latents.shape()
                ),
            ));
        }
        self.net.hyper_synthesize(&hyper_latents.to_tensor())?.crop(height, width)
    }

    /// Evaluates the entropy model over a fully known latent grid, the way
    /// the encoder does. `psi` is required in full mode.
    pub fn trace(&self, latents: &LatentGrid, psi: Option<&Tensor>, mode: EntropyMode) -> Result<EntropyTrace> {
        self.check_latents(latents)?;
        let (h, w) = (latents.height(), latents.width());
        let mut state = Progressive::new(&self.net, mode, h, w, psi)?;
        let mut positions = Vec::with_capacity(h * w);
        for i in 0..h * w {
            state.commit(i, &latents.position(i));
        }
        for i in 0..h * w {
            positions.push(state.predict(i));
        }
        Ok(EntropyTrace {
            mode,
            height: h,
            width: w,
            positions,
        })
    }

    /// Applies parameter network `stage` (1, 2 or 3) to one input vector.
    pub fn stage_params(&self, stage: usize, input: &[f32]) -> Result<StageParams> {
        let net = self
            .net
            .params
            .get(stage.wrapping_sub(1))
            .ok_or(Error::Contract("stage must be 1, 2 or 3"))?;
        if input.len() != net.input_channels() {
            return Err(Error::config(
                "parameter_network",
                alloc::format!("stage {stage} takes {} inputs, got {}", net.input_channels(), input.len()),
            ));
        }
        let (mu, sigma) = net.eval(input);
        Ok(StageParams { mu, sigma })
    }

    fn forward(&self, image: &Tensor, mode: EntropyMode) -> Result<(Forward, usize, usize)> {
        let (h, w) = Self::check_image(image)?;
        let x = image.pad_replicate(padded(h), padded(w))?;
        let latents = quantize(&self.net.analyze(&x)?)?;
        let (lh, lw) = (latents.height(), latents.width());
        let (hyper_latents, psi) = if mode.uses_hyperprior() {
            let zhat = quantize(&self.hyper_analyze(&latents)?)?;
            let psi = self.hyper_synthesize(&zhat, lh, lw)?;
            (Some(zhat), Some(psi))
        } else {
            (None, None)
        };
        Ok((
            Forward {
                latents,
                hyper_latents,
                psi,
            },
            h,
            w,
        ))
    }

    fn encode_hyper(&self, zhat: &LatentGrid) -> Result<Vec<u8>> {
        let mut enc = Encoder::new();
        let plane = zhat.height() * zhat.width();
        for (idx, v) in zhat.values().iter().enumerate() {
            enc.encode_symbol(self.net.hyper_cdf.table(idx / plane)?, *v)?;
        }
        Ok(enc.finish())
    }

    fn hyper_bits(&self, zhat: &LatentGrid) -> Result<f64> {
        let plane = zhat.height() * zhat.width();
        let mut bits = 0.0;
        for (idx, v) in zhat.values().iter().enumerate() {
            bits += self.net.hyper_cdf.table(idx / plane)?.bits(*v);
        }
        Ok(bits)
    }

    /// Codes the latents of the first `positions` raster positions.
    fn encode_latents(
        &self,
        fwd: &Forward,
        mode: EntropyMode,
        positions: usize,
    ) -> Result<(Vec<u8>, EntropyTrace)> {
        let y = &fwd.latents;
        let (h, w) = (y.height(), y.width());
        let mut state = Progressive::new(&self.net, mode, h, w, fwd.psi.as_ref())?;
        for i in 0..h * w {
            state.commit(i, &y.position(i));
        }
        let mut enc = Encoder::new();
        let mut trace = Vec::with_capacity(positions);
        for i in 0..positions.min(h * w) {
            let rec = state.predict(i);
            let symbols = y.position(i);
            for (q, s) in rec.coding().quantized(&self.net.scale_table).into_iter().zip(&symbols) {
                enc.encode_symbol(&table_for(q, &self.net), *s)?;
            }
            trace.push(rec);
        }
        Ok((
            enc.finish(),
            EntropyTrace {
                mode,
                height: h,
                width: w,
                positions: trace,
            },
        ))
    }

    pub fn encode(&self, image: &Tensor, mode: EntropyMode) -> Result<EncodedImage> {
        let (fwd, h, w) = self.forward(image, mode)?;
        let n = fwd.latents.height() * fwd.latents.width();
        self.finish_encode(fwd, h, w, mode, n)
    }

    /// Like [`Codec::encode`] but codes only the first `positions` latent
    /// positions. Used to check that decoding a prefix never depends on
    /// later symbols.
    pub fn encode_prefix(&self, image: &Tensor, mode: EntropyMode, positions: usize) -> Result<EncodedImage> {
        let (fwd, h, w) = self.forward(image, mode)?;
        self.finish_encode(fwd, h, w, mode, positions)
    }

    fn finish_encode(&self, fwd: Forward, h: usize, w: usize, mode: EntropyMode, positions: usize) -> Result<EncodedImage> {
        let hyper = match &fwd.hyper_latents {
            Some(z) => self.encode_hyper(z)?,
            None => Vec::new(),
        };
        let (latent, trace) = self.encode_latents(&fwd, mode, positions)?;
        Ok(EncodedImage {
            bitstream: Bitstream {
                mode,
                height: h,
                width: w,
                padded_height: padded(h),
                padded_width: padded(w),
                weights_hash: self.hash,
                hyper,
                latent,
            },
            latents: fwd.latents,
            hyper_latents: fwd.hyper_latents,
            trace,
        })
    }

    fn check_bitstream(&self, bs: &Bitstream) -> Result<()> {
        if bs.weights_hash != self.hash {
            return Err(Error::HashMismatch);
        }
        for side in [bs.height, bs.width] {
            if side == 0 || side > MAX_SIDE {
                return Err(Error::ImageSize(side));
            }
        }
        if bs.padded_height != padded(bs.height) || bs.padded_width != padded(bs.width) {
            return Err(Error::Bitstream("padded size inconsistent with image size"));
        }
        if !bs.mode.uses_hyperprior() && !bs.hyper.is_empty() {
            return Err(Error::Bitstream("hyper stream present in a mode without hyperprior"));
        }
        Ok(())
    }

    fn decode_hyper(&self, bs: &Bitstream, lh: usize, lw: usize) -> Result<LatentGrid> {
        let (zc, zh, zw) = (
            self.net.config.dims.hyper_channels,
            lh.div_ceil(HYPER_STRIDE),
            lw.div_ceil(HYPER_STRIDE),
        );
        let mut dec = Decoder::new(&bs.hyper)?;
        let plane = zh * zw;
        let mut values = vec![0; zc * plane];
        for (idx, v) in values.iter_mut().enumerate() {
            *v = dec.decode_symbol(self.net.hyper_cdf.table(idx / plane)?)?;
        }
        if dec.remaining() != 0 {
            return Err(Error::Bitstream("trailing bytes after hyper-latents"));
        }
        LatentGrid::new(zc, zh, zw, values)
    }

    /// Decodes the first `positions` latent positions; the rest stay zero.
    fn decode_latents(
        &self,
        bs: &Bitstream,
        positions: usize,
    ) -> Result<(LatentGrid, Option<LatentGrid>, EntropyTrace)> {
        self.check_bitstream(bs)?;
        let (lh, lw) = bs.latent_dims();
        let (zhat, psi) = if bs.mode.uses_hyperprior() {
            let z = self.decode_hyper(bs, lh, lw)?;
            let psi = self.hyper_synthesize(&z, lh, lw)?;
            (Some(z), Some(psi))
        } else {
            (None, None)
        };
        let m = self.net.config.dims.latent_channels;
        let mut state = Progressive::new(&self.net, bs.mode, lh, lw, psi.as_ref())?;
        let mut dec = Decoder::new(&bs.latent)?;
        let mut grid = LatentGrid::zeros(m, lh, lw);
        let n = positions.min(state.positions());
        let mut trace = Vec::with_capacity(n);
        let mut symbols = vec![0; m];
        for i in 0..n {
            let rec = state.predict(i);
            for (q, s) in rec.coding().quantized(&self.net.scale_table).into_iter().zip(symbols.iter_mut()) {
                *s = dec.decode_symbol(&table_for(q, &self.net))?;
            }
            state.commit(i, &symbols);
            grid.set_position(i, &symbols);
            trace.push(rec);
        }
        if n == state.positions() && dec.remaining() != 0 {
            return Err(Error::Bitstream("trailing bytes after latents"));
        }
        let trace = EntropyTrace {
            mode: bs.mode,
            height: lh,
            width: lw,
            positions: trace,
        };
        Ok((grid, zhat, trace))
    }

    pub fn decode(&self, bs: &Bitstream) -> Result<DecodedImage> {
        let (latents, hyper_latents, trace) = self.decode_latents(bs, usize::MAX)?;
        let image = self.synthesize(&latents)?.crop(bs.height, bs.width)?;
        Ok(DecodedImage {
            image,
            latents,
            hyper_latents,
            trace,
        })
    }

    /// Decodes only the first `positions` latents; no image is synthesized.
    pub fn decode_prefix(&self, bs: &Bitstream, positions: usize) -> Result<(LatentGrid, EntropyTrace)> {
        let (latents, _, trace) = self.decode_latents(bs, positions)?;
        Ok((latents, trace))
    }

    /// Ideal code length under the quantized tables the coder would use,
    /// plus per-position and per-stage maps.
    pub fn estimate_rate(&self, image: &Tensor, mode: EntropyMode) -> Result<RateEstimate> {
        let (fwd, h, w) = self.forward(image, mode)?;
        let hyper_bits = match &fwd.hyper_latents {
            Some(z) => self.hyper_bits(z)?,
            None => 0.0,
        };
        let y = &fwd.latents;
        let trace = self.trace(y, fwd.psi.as_ref(), mode)?;
        let n = y.height() * y.width();
        let mut stage_bits = vec![vec![0.0; n]; mode.stages()];
        for (i, rec) in trace.positions.iter().enumerate() {
            let symbols = y.position(i);
            for (s, params) in rec.stages.iter().enumerate() {
                stage_bits[s][i] = params
                    .quantized(&self.net.scale_table)
                    .into_iter()
                    .zip(&symbols)
                    .map(|(q, v)| table_for(q, &self.net).bits(*v))
                    .sum();
            }
        }
        let position_bits = stage_bits[mode.stages() - 1].clone();
        let latent_bits: f64 = position_bits.iter().sum();
        let total_bits = latent_bits + hyper_bits;
        Ok(RateEstimate {
            mode,
            latent_bits,
            hyper_bits,
            total_bits,
            bpp: bits_per_pixel(total_bits, h, w),
            latent_height: y.height(),
            latent_width: y.width(),
            position_bits,
            stage_bits,
            trace,
        })
    }

    /// Rate from the actual coded payload, distortion from the actual
    /// reconstruction.
    pub fn rd_loss(&self, image: &Tensor, lambda: f64, mode: EntropyMode) -> Result<RdPoint> {
        let encoded = self.encode(image, mode)?;
        let decoded = self.decode(&encoded.bitstream)?;
        let (_, h, w) = image.dims3()?;
        let bpp = bits_per_pixel(encoded.bitstream.payload_bits() as f64, h, w);
        let mse = mse(image, &decoded.image)?;
        Ok(RdPoint {
            bpp,
            mse,
            psnr: psnr(mse * 255.0 * 255.0),
            lambda,
            loss: bpp + lambda * mse,
        })
    }
}

pub fn encode_image(image: &Tensor, weights: &ModelWeights, mode: EntropyMode) -> Result<Bitstream> {
    Ok(Codec::new(weights)?.encode(image, mode)?.bitstream)
}

pub fn decode_image(bitstream: &Bitstream, weights: &ModelWeights) -> Result<Tensor> {
    Ok(Codec::new(weights)?.decode(bitstream)?.image)
}

pub fn estimate_rate(image: &Tensor, weights: &ModelWeights, mode: EntropyMode) -> Result<RateEstimate> {
    Codec::new(weights)?.estimate_rate(image, mode)
}

pub fn rd_loss(image: &Tensor, weights: &ModelWeights, lambda: f64, mode: EntropyMode) -> Result<RdPoint> {
    Codec::new(weights)?.rd_loss(image, lambda, mode)
}
