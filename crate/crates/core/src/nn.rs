//! Convolution layers and elementwise activations.
//!
//! Every output element is accumulated in one fixed order: start from the
//! bias, walk the kernel taps in raster order and, for each tap, walk the
//! input channels. Taps that fall outside the input (zero padding) or that a
//! causal mask removes are skipped. Evaluating a single output position
//! therefore gives bitwise the same value as evaluating the whole map, which
//! is what lets the decoder reproduce encoder-side predictions exactly.
//!
//! Weights are always shaped `(out_channels, in_channels, k, k)`, for
//! transposed convolutions too.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{chw_to_hwc, Tensor};

/// Causal masking of a `k x k` window, taps counted in raster order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MaskKind {
    None,
    /// Only taps strictly before the center survive.
    CausalExclusive,
    /// Taps before the center and the center itself survive.
    CausalInclusive,
}

impl MaskKind {
    pub fn keeps(self, tap: usize, kernel: usize) -> bool {
        let center = kernel * kernel / 2;
        match self {
            MaskKind::None => true,
            MaskKind::CausalExclusive => tap < center,
            MaskKind::CausalInclusive => tap <= center,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    pub padding: usize,
    pub mask: MaskKind,
}

impl ConvSpec {
    /// Zero-padded convolution with `floor(k/2)` padding.
    pub fn same(kernel: usize, in_channels: usize, out_channels: usize, stride: usize) -> Self {
        Self {
            kernel,
            in_channels,
            out_channels,
            stride,
            padding: kernel / 2,
            mask: MaskKind::None,
        }
    }

    /// Stride-1 masked convolution with same padding.
    pub fn masked(kernel: usize, channels_in: usize, channels_out: usize, mask: MaskKind) -> Self {
        Self {
            mask,
            ..Self::same(kernel, channels_in, channels_out, 1)
        }
    }

    /// Transposed convolution whose output is exactly `stride` times its input.
    pub fn upsample(kernel: usize, in_channels: usize, out_channels: usize, stride: usize) -> Self {
        Self {
            kernel,
            in_channels,
            out_channels,
            stride,
            padding: kernel.saturating_sub(1) / 2,
            mask: MaskKind::None,
        }
    }

    pub fn output_size(&self, height: usize, width: usize) -> Option<(usize, usize)> {
        let dim = |n: usize| {
            (n + 2 * self.padding)
                .checked_sub(self.kernel)
                .map(|v| v / self.stride + 1)
        };
        Some((dim(height)?, dim(width)?))
    }

    /// Output padding that makes a transposed convolution produce exactly
    /// `stride * n` samples, independent of `n`.
    pub fn output_padding(&self) -> Option<usize> {
        // (n - 1) s + k - 2p + op = s n
        let op = (self.stride + 2 * self.padding) as isize - self.kernel as isize;
        (op >= 0 && (op as usize) < self.stride.max(1)).then_some(op as usize)
    }

    fn check(&self, layer: &str) -> Result<()> {
        if self.kernel == 0 || self.in_channels == 0 || self.out_channels == 0 || self.stride == 0
        {
            return Err(Error::config(layer, format!("degenerate spec {:?}", self)));
        }
        Ok(())
    }
}

/// Weights repacked tap-major for contiguous channel access.
#[derive(Clone, Debug)]
struct PackedKernel {
    spec: ConvSpec,
    /// `[out][tap][in]`.
    weights: Vec<f32>,
    bias: Vec<f32>,
}

impl PackedKernel {
    fn new(layer: &str, spec: ConvSpec, weight: &Tensor, bias: &Tensor) -> Result<Self> {
        spec.check(layer)?;
        let k = spec.kernel;
        let want = [spec.out_channels, spec.in_channels, k, k];
        if weight.shape() != want {
            return Err(Error::config(
                layer,
                format!("weight shape {:?}, expected {:?}", weight.shape(), want),
            ));
        }
        if bias.shape() != [spec.out_channels] {
            return Err(Error::config(
                layer,
                format!(
                    "bias shape {:?}, expected [{}]",
                    bias.shape(),
                    spec.out_channels
                ),
            ));
        }
        let (cin, taps) = (spec.in_channels, k * k);
        let src = weight.data();
        let mut weights = vec![0.0; src.len()];
        for o in 0..spec.out_channels {
            for i in 0..cin {
                for t in 0..taps {
                    weights[(o * taps + t) * cin + i] = src[(o * cin + i) * taps + t];
                }
            }
        }
        Ok(Self {
            spec,
            weights,
            bias: bias.data().to_vec(),
        })
    }

    #[inline]
    fn tap(&self, o: usize, t: usize) -> &[f32] {
        let cin = self.spec.in_channels;
        let taps = self.spec.kernel * self.spec.kernel;
        let start = (o * taps + t) * cin;
        &self.weights[start..start + cin]
    }
}

#[inline]
fn accumulate(mut acc: f32, weights: &[f32], input: &[f32]) -> f32 {
    for (w, x) in weights.iter().zip(input) {
        acc += w * x;
    }
    acc
}

/// Strided (optionally causally masked) convolution.
#[derive(Clone, Debug)]
pub struct Conv2d {
    name: String,
    kernel: PackedKernel,
}

impl Conv2d {
    pub fn new(name: &str, spec: ConvSpec, weight: &Tensor, bias: &Tensor) -> Result<Self> {
        if spec.mask != MaskKind::None && (spec.stride != 1 || spec.kernel.is_multiple_of(2)) {
            return Err(Error::config(name, "masked convolution needs stride 1 and odd k"));
        }
        if spec.kernel.is_multiple_of(2) {
            return Err(Error::config(name, "convolution kernel must be odd"));
        }
        Ok(Self {
            name: name.to_string(),
            kernel: PackedKernel::new(name, spec, weight, bias)?,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn spec(&self) -> &ConvSpec {
        &self.kernel.spec
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let spec = self.kernel.spec;
        let (c, h, w) = input.dims3()?;
        if c != spec.in_channels {
            return Err(Error::config(
                &self.name,
                format!("input has {} channels, expected {}", c, spec.in_channels),
            ));
        }
        let (oh, ow) = spec
            .output_size(h, w)
            .ok_or_else(|| Error::config(&self.name, "input smaller than kernel"))?;
        let hwc = chw_to_hwc(input.data(), c, h, w);
        let oc = spec.out_channels;
        let mut out = vec![0.0; oc * oh * ow];
        let mut buf = vec![0.0; oc];
        for oy in 0..oh {
            for ox in 0..ow {
                self.eval_at(&hwc, h, w, oy, ox, &mut buf);
                for (o, v) in buf.iter().enumerate() {
                    out[(o * oh + oy) * ow + ox] = *v;
                }
            }
        }
        Tensor::new(&[oc, oh, ow], out)
    }

    /// Evaluates output position `(oy, ox)` on a position-major `(h, w, C)`
    /// input.
    pub fn eval_at(&self, hwc: &[f32], h: usize, w: usize, oy: usize, ox: usize, out: &mut [f32]) {
        let spec = &self.kernel.spec;
        let (k, cin) = (spec.kernel, spec.in_channels);
        let y0 = (oy * spec.stride) as isize - spec.padding as isize;
        let x0 = (ox * spec.stride) as isize - spec.padding as isize;
        for (o, slot) in out.iter_mut().enumerate().take(spec.out_channels) {
            let mut acc = self.kernel.bias[o];
            for t in 0..k * k {
                if !spec.mask.keeps(t, k) {
                    continue;
                }
                let iy = y0 + (t / k) as isize;
                let ix = x0 + (t % k) as isize;
                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                    continue;
                }
                let p = (iy as usize * w + ix as usize) * cin;
                acc = accumulate(acc, self.kernel.tap(o, t), &hwc[p..p + cin]);
            }
            *slot = acc;
        }
    }

    /// Applies a 1x1 layer to one feature vector.
    pub fn eval_vector(&self, input: &[f32], out: &mut [f32]) {
        debug_assert_eq!(self.kernel.spec.kernel, 1);
        debug_assert_eq!(input.len(), self.kernel.spec.in_channels);
        for (o, slot) in out.iter_mut().enumerate().take(self.kernel.spec.out_channels) {
            *slot = accumulate(self.kernel.bias[o], self.kernel.tap(o, 0), input);
        }
    }
}

/// Transposed convolution producing exactly `stride` times the input size.
#[derive(Clone, Debug)]
pub struct Deconv2d {
    name: String,
    kernel: PackedKernel,
    output_padding: usize,
}

impl Deconv2d {
    pub fn new(name: &str, spec: ConvSpec, weight: &Tensor, bias: &Tensor) -> Result<Self> {
        if spec.mask != MaskKind::None {
            return Err(Error::config(name, "transposed convolution cannot be masked"));
        }
        let kernel = PackedKernel::new(name, spec, weight, bias)?;
        let output_padding = spec.output_padding().ok_or_else(|| {
            Error::config(
                name,
                format!(
                    "k={} s={} p={} cannot produce exactly {}x the input size",
                    spec.kernel, spec.stride, spec.padding, spec.stride
                ),
            )
        })?;
        Ok(Self {
            name: name.to_string(),
            kernel,
            output_padding,
        })
    }

    pub fn spec(&self) -> &ConvSpec {
        &self.kernel.spec
    }

    pub fn output_padding(&self) -> usize {
        self.output_padding
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let spec = self.kernel.spec;
        let (c, h, w) = input.dims3()?;
        if c != spec.in_channels {
            return Err(Error::config(
                &self.name,
                format!("input has {} channels, expected {}", c, spec.in_channels),
            ));
        }
        let (k, s, cin, oc) = (spec.kernel, spec.stride, c, spec.out_channels);
        let (oh, ow) = (h * s, w * s);
        let hwc = chw_to_hwc(input.data(), c, h, w);
        let mut out = vec![0.0; oc * oh * ow];
        let pad = spec.padding as isize;
        for oy in 0..oh {
            for ox in 0..ow {
                for o in 0..oc {
                    let mut acc = self.kernel.bias[o];
                    for t in 0..k * k {
                        let ny = oy as isize + pad - (t / k) as isize;
                        let nx = ox as isize + pad - (t % k) as isize;
                        if ny < 0 || nx < 0 || ny % s as isize != 0 || nx % s as isize != 0 {
                            continue;
                        }
                        let (iy, ix) = ((ny / s as isize) as usize, (nx / s as isize) as usize);
                        if iy >= h || ix >= w {
                            continue;
                        }
                        let p = (iy * w + ix) * cin;
                        acc = accumulate(acc, self.kernel.tap(o, t), &hwc[p..p + cin]);
                    }
                    out[(o * oh + oy) * ow + ox] = acc;
                }
            }
        }
        Tensor::new(&[oc, oh, ow], out)
    }
}

pub fn conv2d(input: &Tensor, weights: &Tensor, bias: &Tensor, spec: &ConvSpec) -> Result<Tensor> {
    Conv2d::new("conv2d", *spec, weights, bias)?.forward(input)
}

pub fn deconv2d(input: &Tensor, weights: &Tensor, bias: &Tensor, spec: &ConvSpec) -> Result<Tensor> {
    Deconv2d::new("deconv2d", *spec, weights, bias)?.forward(input)
}

/// Stride-1, same-padded convolution with raster-causal masking.
pub fn masked_conv2d(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    spec: &ConvSpec,
) -> Result<Tensor> {
    if spec.mask == MaskKind::None {
        return Err(Error::Contract("masked_conv2d needs a causal mask"));
    }
    if spec.stride != 1 || spec.padding != spec.kernel / 2 {
        return Err(Error::Contract("masked_conv2d needs stride 1 and same padding"));
    }
    Conv2d::new("masked_conv2d", *spec, weights, bias)?.forward(input)
}

pub fn leaky_relu(input: &Tensor, slope: f32) -> Tensor {
    input.map(|v| leaky(v, slope))
}

#[inline]
pub fn leaky(v: f32, slope: f32) -> f32 {
    if v >= 0.0 {
        v
    } else {
        slope * v
    }
}

pub(crate) fn leaky_in_place(values: &mut [f32], slope: f32) {
    for v in values {
        *v = leaky(*v, slope);
    }
}

/// Extracts the zero-padded `k x k` neighborhood of every position.
///
/// Returns a `(H*W, k*k*C)` matrix. Row `i` belongs to raster position `i`;
/// within a row, entries are ordered by kernel tap in raster order and then
/// by channel, i.e. column `tap * C + c`.
pub fn unfold(input: &Tensor, k: usize) -> Result<Tensor> {
    if k.is_multiple_of(2) {
        return Err(Error::config("unfold", "kernel must be odd"));
    }
    let (c, h, w) = input.dims3()?;
    let hwc = chw_to_hwc(input.data(), c, h, w);
    let cols = k * k * c;
    let mut out = vec![0.0; h * w * cols];
    for p in 0..h * w {
        unfold_row(&hwc, c, h, w, p, k, MaskKind::None, &mut out[p * cols..(p + 1) * cols]);
    }
    Tensor::new(&[h * w, cols], out)
}

/// Writes the (masked) neighborhood of `position` into `row`, zeros elsewhere.
pub(crate) fn unfold_row(
    hwc: &[f32],
    c: usize,
    h: usize,
    w: usize,
    position: usize,
    k: usize,
    mask: MaskKind,
    row: &mut [f32],
) {
    let (cy, cx) = ((position / w) as isize, (position % w) as isize);
    let r = (k / 2) as isize;
    for t in 0..k * k {
        let dst = &mut row[t * c..(t + 1) * c];
        let iy = cy + (t / k) as isize - r;
        let ix = cx + (t % k) as isize - r;
        if !mask.keeps(t, k) || iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
            dst.fill(0.0);
        } else {
            let p = (iy as usize * w + ix as usize) * c;
            dst.copy_from_slice(&hwc[p..p + c]);
        }
    }
}
