//! The three-stage progressive entropy model evaluated in raster order.

use alloc::vec;
use alloc::vec::Vec;

use super::network::Network;
use crate::error::{Error, Result};
use crate::nn::{unfold_row, MaskKind};
use crate::probability::{confidence, QuantizedParams, ScaleTable};
use crate::reference::{best_match, gate, PatchIndex, ReferenceMatch};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EntropyMode {
    /// Local context only.
    ContextOnly,
    /// Local context plus the global reference.
    ContextReference,
    /// Context, reference and hyperprior.
    Full,
}

impl EntropyMode {
    pub const ALL: [EntropyMode; 3] = [Self::ContextOnly, Self::ContextReference, Self::Full];

    pub fn name(self) -> &'static str {
        match self {
            Self::ContextOnly => "context_only",
            Self::ContextReference => "context_reference",
            Self::Full => "full",
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Self::ContextOnly => 0,
            Self::ContextReference => 1,
            Self::Full => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.tag() == tag)
    }

    /// Number of parameter stages evaluated; the last one drives the coder.
    pub fn stages(self) -> usize {
        self.tag() as usize + 1
    }

    pub fn uses_hyperprior(self) -> bool {
        self == Self::Full
    }
}

impl core::str::FromStr for EntropyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or(Error::Contract("mode must be context_only, context_reference or full"))
    }
}

impl core::fmt::Display for EntropyMode {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-channel Gaussian parameters produced by one stage at one position.
#[derive(Clone, Debug, PartialEq)]
pub struct StageParams {
    pub mu: Vec<f32>,
    pub sigma: Vec<f32>,
}

impl StageParams {
    pub fn quantized(&self, table: &ScaleTable) -> Vec<QuantizedParams> {
        crate::probability::quantize_gaussian_params(&self.mu, &self.sigma, table)
    }
}

/// Everything the entropy model computed at one latent position.
#[derive(Clone, Debug, PartialEq)]
pub struct PositionTrace {
    pub position: usize,
    /// Stage 1 first; as many entries as the mode has stages.
    pub stages: Vec<StageParams>,
    /// Reference search outcome; `None` in context-only mode.
    pub reference: Option<ReferenceMatch>,
}

impl PositionTrace {
    /// The parameters the coder uses.
    pub fn coding(&self) -> &StageParams {
        self.stages.last().expect("at least one stage")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntropyTrace {
    pub mode: EntropyMode,
    pub height: usize,
    pub width: usize,
    pub positions: Vec<PositionTrace>,
}

impl EntropyTrace {
    /// The quantized `(mu, sigma)` sequence in coding order.
    pub fn coded_params(&self, table: &ScaleTable) -> Vec<QuantizedParams> {
        self.positions
            .iter()
            .flat_map(|p| p.coding().quantized(table))
            .collect()
    }
}

/// Decoder-visible state: the partially known latent grid plus the cached
/// patch rows and stage-1 outputs of earlier positions.
pub(crate) struct Progressive<'a> {
    net: &'a Network,
    mode: EntropyMode,
    channels: usize,
    height: usize,
    width: usize,
    /// Position-major latents; positions not yet committed are zero.
    grid: Vec<f32>,
    symbols: Vec<i32>,
    patches: PatchIndex,
    stage1: Vec<StageParams>,
    /// Position-major hyper-decoder features.
    psi: Option<Vec<f32>>,
}

impl<'a> Progressive<'a> {
    pub(crate) fn new(
        net: &'a Network,
        mode: EntropyMode,
        height: usize,
        width: usize,
        psi: Option<&Tensor>,
    ) -> Result<Self> {
        let dims = net.config.dims;
        let c = dims.latent_channels;
        let psi = match (mode.uses_hyperprior(), psi) {
            (true, Some(t)) => {
                let (pc, ph, pw) = t.dims3()?;
                if pc != dims.hyper_output_channels() || ph != height || pw != width {
                    return Err(Error::config(
                        "hyper_synthesis",
                        alloc::format!("features {pc}x{ph}x{pw} do not align with latents {height}x{width}"),
                    ));
                }
                Some(t.to_hwc()?)
            }
            (true, None) => return Err(Error::Contract("full mode needs hyper features")),
            (false, _) => None,
        };
        let k = dims.patch_size;
        Ok(Self {
            net,
            mode,
            channels: c,
            height,
            width,
            grid: vec![0.0; height * width * c],
            symbols: vec![0; height * width * c],
            patches: PatchIndex::new(k * k * c),
            stage1: Vec::with_capacity(height * width),
            psi,
        })
    }

    pub(crate) fn positions(&self) -> usize {
        self.height * self.width
    }

    /// Computes every stage for position `i`. Positions must be predicted in
    /// raster order, each after the previous one was committed. Only latents
    /// at positions before `i` are read.
    pub(crate) fn predict(&mut self, i: usize) -> PositionTrace {
        debug_assert_eq!(self.stage1.len(), i);
        let (c, h, w) = (self.channels, self.height, self.width);
        let mut ctx = vec![0.0; c];
        self.net.context.eval_at(&self.grid, h, w, i / w, i % w, &mut ctx);
        let (mu1, sigma1) = self.net.params[0].eval(&ctx);
        let s1 = StageParams { mu: mu1, sigma: sigma1 };
        self.stage1.push(s1.clone());
        if self.mode == EntropyMode::ContextOnly {
            return PositionTrace {
                position: i,
                stages: vec![s1],
                reference: None,
            };
        }

        let k = self.net.config.dims.patch_size;
        self.patches.push_from_grid(&self.grid, c, h, w, k);
        let mut m = best_match(&self.patches.similarity_row(i), i);
        let gated = match m.source {
            Some(j) => {
                let prev = &self.stage1[j];
                m.confidence = confidence(&self.symbols[j * c..(j + 1) * c], &prev.mu, &prev.sigma);
                let mut window = vec![0.0; k * k * c];
                unfold_row(&self.grid, c, h, w, j, k, MaskKind::CausalInclusive, &mut window);
                let mut features = vec![0.0; c];
                self.net.reference.eval_at(&window, k, k, k / 2, k / 2, &mut features);
                gate(&features, m.similarity, m.confidence)
            }
            None => vec![0.0; c],
        };
        let mut input = gated;
        input.extend_from_slice(&s1.mu);
        input.extend_from_slice(&s1.sigma);
        let (mu2, sigma2) = self.net.params[1].eval(&input);
        let s2 = StageParams { mu: mu2, sigma: sigma2 };
        let mut stages = vec![s1, s2];

        if let Some(psi) = &self.psi {
            let pc = self.net.config.dims.hyper_output_channels();
            let mut input = psi[i * pc..(i + 1) * pc].to_vec();
            input.extend_from_slice(&stages[1].mu);
            input.extend_from_slice(&stages[1].sigma);
            let (mu3, sigma3) = self.net.params[2].eval(&input);
            stages.push(StageParams { mu: mu3, sigma: sigma3 });
        }
        PositionTrace {
            position: i,
            stages,
            reference: Some(m),
        }
    }

    /// Makes the symbols of position `i` visible to later predictions.
    pub(crate) fn commit(&mut self, i: usize, symbols: &[i32]) {
        let c = self.channels;
        for (ch, s) in symbols.iter().enumerate() {
            self.symbols[i * c + ch] = *s;
            self.grid[i * c + ch] = *s as f32;
        }
    }
}
