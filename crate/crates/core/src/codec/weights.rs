//! Model dimensions, the layer inventory and the named-tensor weight set.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::nn::MaskKind;
use crate::probability::{FactorizedCdf, ScaleTable};
use crate::rng::Lcg64;
use crate::tensor::Tensor;

/// Kernel size of the local context model.
pub const CONTEXT_KERNEL: usize = 5;
/// Spatial downsampling of the analysis transform.
pub const LATENT_STRIDE: usize = 16;
/// Spatial downsampling of the hyper-latents relative to the latents.
pub const HYPER_STRIDE: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelDims {
    /// Latent channels `M`.
    pub latent_channels: usize,
    /// Channels inside the analysis and synthesis transforms.
    pub main_channels: usize,
    /// Hyper-latent channels.
    pub hyper_channels: usize,
    /// Reference patch size `k` (odd).
    pub patch_size: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            latent_channels: 384,
            main_channels: 192,
            hyper_channels: 192,
            patch_size: 3,
        }
    }
}

impl ModelDims {
    /// Scaled-down model: transform and hyper widths are half of `M`.
    pub fn with_latent_channels(latent_channels: usize) -> Self {
        let half = (latent_channels / 2).max(1);
        Self {
            latent_channels,
            main_channels: half,
            hyper_channels: half,
            patch_size: 3,
        }
    }

    /// Hyper-decoder output, one mean and one scale feature per latent
    /// channel.
    pub fn hyper_output_channels(&self) -> usize {
        2 * self.latent_channels
    }

    /// Width of the two hidden layers of each parameter network.
    pub fn param_hidden_channels(&self) -> usize {
        3 * self.latent_channels
    }

    /// Input width of parameter network `stage` (1, 2 or 3).
    pub fn param_input_channels(&self, stage: usize) -> usize {
        let m = self.latent_channels;
        match stage {
            1 => m,
            2 => m + 2 * m,
            _ => self.hyper_output_channels() + 2 * m,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    pub dims: ModelDims,
    pub leaky_slope: f32,
    /// Latents are coded over `[-L, L]` plus an escape.
    pub latent_support: u32,
    /// Hyper-latents are coded over `[-Lz, Lz]` plus an escape.
    pub hyper_support: u32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::new(ModelDims::default())
    }
}

impl ModelConfig {
    pub fn new(dims: ModelDims) -> Self {
        Self {
            dims,
            leaky_slope: 0.01,
            latent_support: 255,
            hyper_support: 63,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dims;
        if d.latent_channels == 0 || d.main_channels == 0 || d.hyper_channels == 0 {
            return Err(Error::InvalidWeights("channel counts must be positive".into()));
        }
        if d.patch_size.is_multiple_of(2) {
            return Err(Error::InvalidWeights("patch size must be odd".into()));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::InvalidWeights("leaky slope must lie in (0, 1)".into()));
        }
        if self.latent_support == 0 || self.latent_support > i16::MAX as u32 {
            return Err(Error::InvalidWeights("latent support out of range".into()));
        }
        if self.hyper_support == 0 || self.hyper_support > i16::MAX as u32 {
            return Err(Error::InvalidWeights("hyper support out of range".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    Deconv,
    Masked(MaskKind),
    Gsdn,
    Igsdn,
}

/// One row of the layer inventory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerShape {
    pub name: String,
    pub kind: LayerKind,
    pub kernel: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    /// Leaky ReLU follows this layer.
    pub leaky: bool,
}

impl LayerShape {
    fn conv(name: &str, kind: LayerKind, k: usize, cin: usize, cout: usize, s: usize, leaky: bool) -> Self {
        Self {
            name: name.into(),
            kind,
            kernel: k,
            in_channels: cin,
            out_channels: cout,
            stride: s,
            leaky,
        }
    }

    fn norm(name: &str, kind: LayerKind, channels: usize) -> Self {
        Self {
            name: name.into(),
            kind,
            kernel: 0,
            in_channels: channels,
            out_channels: channels,
            stride: 1,
            leaky: false,
        }
    }

    /// Compact description such as `Conv: k5c192s2` or `GSDN`.
    pub fn describe(&self) -> String {
        let prefix = match self.kind {
            LayerKind::Conv => "Conv",
            LayerKind::Deconv => "Deconv",
            LayerKind::Masked(_) => "Masked",
            LayerKind::Gsdn => return "GSDN".into(),
            LayerKind::Igsdn => return "IGSDN".into(),
        };
        format!("{}: k{}c{}s{}", prefix, self.kernel, self.out_channels, self.stride)
    }

    /// Tensor names and shapes this layer owns.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>)> {
        let n = self.in_channels;
        match self.kind {
            LayerKind::Gsdn | LayerKind::Igsdn => vec![
                (format!("{}.beta", self.name), vec![n]),
                (format!("{}.gamma", self.name), vec![n, n]),
                (format!("{}.nu", self.name), vec![n]),
                (format!("{}.tau", self.name), vec![n, n]),
            ],
            _ => vec![
                (
                    format!("{}.weight", self.name),
                    vec![self.out_channels, self.in_channels, self.kernel, self.kernel],
                ),
                (format!("{}.bias", self.name), vec![self.out_channels]),
            ],
        }
    }
}

/// Every layer of the model in evaluation order, grouped by component.
pub fn architecture(dims: &ModelDims) -> Vec<LayerShape> {
    use LayerKind::*;
    let (m, n, z) = (dims.latent_channels, dims.main_channels, dims.hyper_channels);
    let hidden = dims.param_hidden_channels();
    let mut layers = vec![
        LayerShape::conv("analysis.conv0", Conv, 5, 3, n, 2, false),
        LayerShape::norm("analysis.gsdn0", Gsdn, n),
        LayerShape::conv("analysis.conv1", Conv, 5, n, n, 2, false),
        LayerShape::norm("analysis.gsdn1", Gsdn, n),
        LayerShape::conv("analysis.conv2", Conv, 5, n, n, 2, false),
        LayerShape::norm("analysis.gsdn2", Gsdn, n),
        LayerShape::conv("analysis.conv3", Conv, 5, n, m, 2, false),
        LayerShape::conv("synthesis.deconv0", Deconv, 5, m, n, 2, false),
        LayerShape::norm("synthesis.igsdn0", Igsdn, n),
        LayerShape::conv("synthesis.deconv1", Deconv, 5, n, n, 2, false),
        LayerShape::norm("synthesis.igsdn1", Igsdn, n),
        LayerShape::conv("synthesis.deconv2", Deconv, 5, n, n, 2, false),
        LayerShape::norm("synthesis.igsdn2", Igsdn, n),
        LayerShape::conv("synthesis.deconv3", Deconv, 5, n, 3, 2, false),
        LayerShape::conv("hyper_analysis.conv0", Conv, 3, m, z, 1, true),
        LayerShape::conv("hyper_analysis.conv1", Conv, 5, z, z, 2, true),
        LayerShape::conv("hyper_analysis.conv2", Conv, 5, z, z, 2, false),
        LayerShape::conv("hyper_synthesis.deconv0", Deconv, 5, z, z, 2, true),
        LayerShape::conv("hyper_synthesis.deconv1", Deconv, 5, z, z, 2, true),
        LayerShape::conv("hyper_synthesis.deconv2", Deconv, 3, z, dims.hyper_output_channels(), 1, false),
        LayerShape::conv("context", Masked(MaskKind::CausalExclusive), CONTEXT_KERNEL, m, m, 1, false),
        LayerShape::conv("reference", Masked(MaskKind::CausalInclusive), dims.patch_size, m, m, 1, false),
    ];
    for stage in 1..=3 {
        let cin = dims.param_input_channels(stage);
        let name = |i: usize| format!("param{stage}.conv{i}");
        layers.push(LayerShape::conv(&name(0), Conv, 1, cin, hidden, 1, true));
        layers.push(LayerShape::conv(&name(1), Conv, 1, hidden, hidden, 1, true));
        layers.push(LayerShape::conv(&name(2), Conv, 1, hidden, 2 * m, 1, false));
    }
    layers
}

/// How `generate` fills convolution tensors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WeightInit {
    /// Every weight and bias uniform in `[-a, a)`.
    Uniform(f32),
    /// Weights uniform in `[-g sqrt(3 / fan_in), g sqrt(3 / fan_in))`,
    /// biases uniform in `[-0.05, 0.05)`. Keeps activations, and hence
    /// latents, away from zero.
    FanIn(f32),
}

impl Default for WeightInit {
    fn default() -> Self {
        WeightInit::Uniform(0.05)
    }
}

/// Named tensors plus entropy tables: everything that defines one codec.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelWeights {
    pub config: ModelConfig,
    pub tensors: BTreeMap<String, Tensor>,
    pub scale_table: ScaleTable,
    pub hyper_cdf: FactorizedCdf,
    /// Content hash of the serialized weights; bitstreams carry it.
    pub hash: [u8; 32],
}

impl ModelWeights {
    /// Seeded weights. Normalization layers get `beta = 1`, small positive
    /// `gamma`, `nu = tau = 0`; hyper-latent tables are uniform.
    pub fn generate(config: ModelConfig, seed: u64, init: WeightInit) -> Self {
        let mut rng = Lcg64::new(seed);
        let mut tensors = BTreeMap::new();
        for layer in architecture(&config.dims) {
            match layer.kind {
                LayerKind::Gsdn | LayerKind::Igsdn => {
                    let n = layer.in_channels;
                    let mut beta_gamma_nu_tau = layer.tensors().into_iter();
                    let (beta, gamma, nu, tau) = (
                        beta_gamma_nu_tau.next().unwrap(),
                        beta_gamma_nu_tau.next().unwrap(),
                        beta_gamma_nu_tau.next().unwrap(),
                        beta_gamma_nu_tau.next().unwrap(),
                    );
                    tensors.insert(beta.0, Tensor::filled(&[n], 1.0));
                    tensors.insert(
                        gamma.0,
                        Tensor::from_fn(&[n, n], |_| 0.001 + 0.009 * rng.next_f32()),
                    );
                    tensors.insert(nu.0, Tensor::zeros(&[n]));
                    tensors.insert(tau.0, Tensor::zeros(&[n, n]));
                }
                _ => {
                    let (weight_bound, bias_bound) = match init {
                        WeightInit::Uniform(a) => (a, a),
                        WeightInit::FanIn(gain) => {
                            let mut fan_in = (layer.in_channels * layer.kernel * layer.kernel) as f32;
                            if layer.kind == LayerKind::Deconv {
                                fan_in /= (layer.stride * layer.stride) as f32;
                            }
                            (gain * libm::sqrtf(3.0 / fan_in), 0.05)
                        }
                    };
                    let mut shapes = layer.tensors().into_iter();
                    let (wname, wshape) = shapes.next().unwrap();
                    let (bname, bshape) = shapes.next().unwrap();
                    tensors.insert(wname, Tensor::from_fn(&wshape, |_| rng.symmetric(weight_bound)));
                    tensors.insert(bname, Tensor::from_fn(&bshape, |_| rng.symmetric(bias_bound)));
                }
            }
        }
        Self {
            config,
            tensors,
            scale_table: ScaleTable::default(),
            hyper_cdf: FactorizedCdf::uniform(config.dims.hyper_channels, config.hyper_support),
            hash: [0; 32],
        }
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::InvalidWeights(format!("missing tensor {name}")))
    }

    pub fn tensor_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::InvalidWeights(format!("missing tensor {name}")))
    }

    /// Total number of scalar parameters in the named tensors.
    pub fn parameter_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }
}
