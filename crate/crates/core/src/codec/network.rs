//! Typed layers built once from a [`ModelWeights`].

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::weights::{architecture, LayerKind, LayerShape, ModelConfig, ModelWeights};
use crate::error::{Error, Result};
use crate::gsdn::{gsdn_forward, igsdn_forward, GsdnParams};
use crate::nn::{leaky_in_place, leaky_relu, Conv2d, ConvSpec, Deconv2d};
use crate::probability::{FactorizedCdf, ScaleTable, SCALE_MAX, SCALE_MIN};
use crate::tensor::Tensor;

/// Stack of three 1x1 layers mapping features to `(mu, sigma)`.
#[derive(Clone, Debug)]
pub(crate) struct ParamNet {
    layers: Vec<Conv2d>,
    slope: f32,
}

/// Softplus followed by the scale-table range.
pub fn sigma_from_raw(raw: f32) -> f32 {
    let soft = raw.max(0.0) + libm::log1pf(libm::expf(-raw.abs()));
    soft.clamp(SCALE_MIN, SCALE_MAX)
}

impl ParamNet {
    pub(crate) fn input_channels(&self) -> usize {
        self.layers[0].spec().in_channels
    }

    /// Returns `(mu, sigma)`, each of length `M`.
    pub(crate) fn eval(&self, input: &[f32]) -> (Vec<f32>, Vec<f32>) {
        let width = self.layers[0].spec().out_channels;
        let mut a = vec![0.0; width];
        let mut b = vec![0.0; self.layers[1].spec().out_channels];
        self.layers[0].eval_vector(input, &mut a);
        leaky_in_place(&mut a, self.slope);
        self.layers[1].eval_vector(&a, &mut b);
        leaky_in_place(&mut b, self.slope);
        let out_c = self.layers[2].spec().out_channels;
        let mut out = vec![0.0; out_c];
        self.layers[2].eval_vector(&b, &mut out);
        let m = out_c / 2;
        let sigma = out[m..].iter().map(|v| sigma_from_raw(*v)).collect();
        out.truncate(m);
        (out, sigma)
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Network {
    pub config: ModelConfig,
    analysis: Vec<Conv2d>,
    analysis_norm: Vec<GsdnParams>,
    synthesis: Vec<Deconv2d>,
    synthesis_norm: Vec<GsdnParams>,
    hyper_analysis: Vec<Conv2d>,
    hyper_synthesis: Vec<Deconv2d>,
    pub context: Conv2d,
    pub reference: Conv2d,
    pub params: Vec<ParamNet>,
    pub scale_table: ScaleTable,
    pub hyper_cdf: FactorizedCdf,
}

fn tensor_checked<'a>(w: &'a ModelWeights, name: &str, shape: &[usize]) -> Result<&'a Tensor> {
    let t = w.tensor(name)?;
    if t.shape() != shape {
        return Err(Error::InvalidWeights(format!(
            "{name} has shape {:?}, expected {:?}",
            t.shape(),
            shape
        )));
    }
    if !t.is_finite() {
        return Err(Error::InvalidWeights(format!("{name} contains non-finite values")));
    }
    Ok(t)
}

fn conv_from(w: &ModelWeights, layer: &LayerShape) -> Result<Conv2d> {
    let shapes = layer.tensors();
    let weight = tensor_checked(w, &shapes[0].0, &shapes[0].1)?;
    let bias = tensor_checked(w, &shapes[1].0, &shapes[1].1)?;
    let spec = match layer.kind {
        LayerKind::Masked(mask) => ConvSpec::masked(layer.kernel, layer.in_channels, layer.out_channels, mask),
        _ => ConvSpec::same(layer.kernel, layer.in_channels, layer.out_channels, layer.stride),
    };
    Conv2d::new(&layer.name, spec, weight, bias)
}

fn deconv_from(w: &ModelWeights, layer: &LayerShape) -> Result<Deconv2d> {
    let shapes = layer.tensors();
    let weight = tensor_checked(w, &shapes[0].0, &shapes[0].1)?;
    let bias = tensor_checked(w, &shapes[1].0, &shapes[1].1)?;
    let spec = ConvSpec::upsample(layer.kernel, layer.in_channels, layer.out_channels, layer.stride);
    Deconv2d::new(&layer.name, spec, weight, bias)
}

fn norm_from(w: &ModelWeights, layer: &LayerShape) -> Result<GsdnParams> {
    let shapes = layer.tensors();
    let get = |i: usize| -> Result<Vec<f32>> {
        let t = w.tensor(&shapes[i].0)?;
        if t.shape() != shapes[i].1.as_slice() {
            return Err(Error::InvalidWeights(format!("{} has shape {:?}", shapes[i].0, t.shape())));
        }
        Ok(t.data().to_vec())
    };
    GsdnParams::sanitized(get(0)?, get(1)?, get(2)?, get(3)?)
        .map_err(|e| Error::InvalidWeights(format!("{}: {e}", layer.name)))
}

impl Network {
    pub(crate) fn build(w: &ModelWeights) -> Result<Self> {
        w.config.validate()?;
        let dims = w.config.dims;
        if w.hyper_cdf.channels() != dims.hyper_channels || w.hyper_cdf.support() != w.config.hyper_support {
            return Err(Error::InvalidWeights(format!(
                "hyper tables cover {} channels over [-{}, {}], expected {} over [-{}, {}]",
                w.hyper_cdf.channels(),
                w.hyper_cdf.support(),
                w.hyper_cdf.support(),
                dims.hyper_channels,
                w.config.hyper_support,
                w.config.hyper_support
            )));
        }
        let mut analysis = vec![];
        let mut analysis_norm = vec![];
        let mut synthesis = vec![];
        let mut synthesis_norm = vec![];
        let mut hyper_analysis = vec![];
        let mut hyper_synthesis = vec![];
        let mut context = None;
        let mut reference = None;
        let mut params: Vec<Vec<Conv2d>> = vec![vec![], vec![], vec![]];
        for layer in architecture(&dims) {
            let group = layer.name.split('.').next().unwrap_or("");
            match (group, layer.kind) {
                ("analysis", LayerKind::Gsdn) => analysis_norm.push(norm_from(w, &layer)?),
                ("analysis", _) => analysis.push(conv_from(w, &layer)?),
                ("synthesis", LayerKind::Igsdn) => synthesis_norm.push(norm_from(w, &layer)?),
                ("synthesis", _) => synthesis.push(deconv_from(w, &layer)?),
                ("hyper_analysis", _) => hyper_analysis.push(conv_from(w, &layer)?),
                ("hyper_synthesis", _) => hyper_synthesis.push(deconv_from(w, &layer)?),
                ("context", _) => context = Some(conv_from(w, &layer)?),
                ("reference", _) => reference = Some(conv_from(w, &layer)?),
                (p, _) => {
                    let stage: usize = p.trim_start_matches("param").parse().unwrap_or(0);
                    params[stage - 1].push(conv_from(w, &layer)?);
                }
            }
        }
        let slope = w.config.leaky_slope;
        Ok(Self {
            config: w.config,
            analysis,
            analysis_norm,
            synthesis,
            synthesis_norm,
            hyper_analysis,
            hyper_synthesis,
            context: context.expect("architecture has a context model"),
            reference: reference.expect("architecture has a reference model"),
            params: params
                .into_iter()
                .map(|layers| ParamNet { layers, slope })
                .collect(),
            scale_table: w.scale_table.clone(),
            hyper_cdf: w.hyper_cdf.clone(),
        })
    }

    pub(crate) fn analyze(&self, x: &Tensor) -> Result<Tensor> {
        let mut t = x.clone();
        for (i, conv) in self.analysis.iter().enumerate() {
            t = conv.forward(&t)?;
            if let Some(p) = self.analysis_norm.get(i) {
                t = gsdn_forward(&t, p)?;
            }
        }
        Ok(t)
    }

    pub(crate) fn synthesize(&self, y: &Tensor) -> Result<Tensor> {
        let mut t = y.clone();
        for (i, deconv) in self.synthesis.iter().enumerate() {
            t = deconv.forward(&t)?;
            if let Some(p) = self.synthesis_norm.get(i) {
                t = igsdn_forward(&t, p)?;
            }
        }
        Ok(t)
    }

    pub(crate) fn hyper_analyze(&self, y: &Tensor) -> Result<Tensor> {
        let slope = self.config.leaky_slope;
        let last = self.hyper_analysis.len() - 1;
        let mut t = y.clone();
        for (i, conv) in self.hyper_analysis.iter().enumerate() {
            t = conv.forward(&t)?;
            if i < last {
                t = leaky_relu(&t, slope);
            }
        }
        Ok(t)
    }

    pub(crate) fn hyper_synthesize(&self, z: &Tensor) -> Result<Tensor> {
        let slope = self.config.leaky_slope;
        let last = self.hyper_synthesis.len() - 1;
        let mut t = z.clone();
        for (i, deconv) in self.hyper_synthesis.iter().enumerate() {
            t = deconv.forward(&t)?;
            if i < last {
                t = leaky_relu(&t, slope);
            }
        }
        Ok(t)
    }
}
