//! Deterministic test inputs: random images, a duplicated-texture image and
//! hand-built weights under which the reference path is clearly useful.

use alloc::vec;
use alloc::vec::Vec;

use crate::codec::{architecture, LayerKind, ModelConfig, ModelDims, ModelWeights, WeightInit};
use crate::probability::FactorizedCdf;
use crate::rng::Lcg64;
use crate::tensor::Tensor;

/// `(3, h, w)` image with independent uniform pixels on the 8-bit grid.
pub fn random_image(seed: u64, height: usize, width: usize) -> Tensor {
    let mut rng = Lcg64::new(seed);
    Tensor::from_fn(&[3, height, width], |_| rng.below(256) as f32 / 255.0)
}

/// Smooth random image: a few random sinusoids plus mild noise.
pub fn textured_image(seed: u64, height: usize, width: usize) -> Tensor {
    let mut rng = Lcg64::new(seed);
    let waves: Vec<[f32; 4]> = (0..9)
        .map(|_| {
            [
                rng.symmetric(0.4),
                rng.symmetric(0.4),
                rng.next_f32() * core::f32::consts::TAU,
                0.1 + 0.2 * rng.next_f32(),
            ]
        })
        .collect();
    let mut noise = Lcg64::new(seed ^ 0x5eed);
    Tensor::from_fn(&[3, height, width], |idx| {
        let c = idx / (height * width);
        let y = ((idx / width) % height) as f32;
        let x = (idx % width) as f32;
        let mut v = 0.5;
        for wv in &waves[c * 3..c * 3 + 3] {
            v += wv[3] * libm::sinf(wv[0] * y + wv[1] * x + wv[2]);
        }
        let v = v + noise.symmetric(0.02);
        libm::roundf(v.clamp(0.0, 1.0) * 255.0) / 255.0
    })
}

/// A random `block x block` tile repeated over a `size x size` image.
pub fn duplicate_texture_image(seed: u64, size: usize, block: usize) -> Tensor {
    let tile = random_image(seed, block, block);
    Tensor::from_fn(&[3, size, size], |idx| {
        let c = idx / (size * size);
        let y = (idx / size) % size;
        let x = idx % size;
        tile.get3(c, y % block, x % block)
    })
}

/// Inverse of softplus.
fn softplus_inverse(s: f32) -> f32 {
    libm::logf(libm::expm1f(s))
}

/// Stage-1 scale of [`reference_favoring_weights`].
pub const CONTEXT_SIGMA: f32 = 16.0;
/// Stage-2 and stage-3 scale of [`reference_favoring_weights`].
pub const REFERENCE_SIGMA: f32 = 1.0;

/// Seeded transforms combined with a hand-wired entropy model:
///
/// * stage 1 predicts `mu = 0`, `sigma = CONTEXT_SIGMA` everywhere;
/// * the reference model copies the matched latent, and stage 2 predicts
///   `mu = a * S * U * y_j` with `a = CONTEXT_SIGMA * sqrt(2 pi)`, so an exact
///   match of a latent near zero predicts it almost exactly, with
///   `sigma = REFERENCE_SIGMA`;
/// * stage 3 passes stage 2 through and ignores the hyperprior, whose
///   transforms are zero and whose tables concentrate on 0.
pub fn reference_favoring_weights(latent_channels: usize, seed: u64) -> ModelWeights {
    let config = ModelConfig::new(ModelDims::with_latent_channels(latent_channels));
    let mut w = ModelWeights::generate(config, seed, WeightInit::FanIn(2.0));
    let m = latent_channels;
    let s = config.leaky_slope;
    let a = CONTEXT_SIGMA * libm::sqrtf(2.0 * core::f32::consts::PI);
    let sigma1 = softplus_inverse(CONTEXT_SIGMA);
    let sigma2 = softplus_inverse(REFERENCE_SIGMA);

    for layer in architecture(&config.dims) {
        let zero = layer.name.starts_with("hyper_")
            || layer.name.starts_with("context")
            || layer.name.starts_with("reference")
            || layer.name.starts_with("param");
        if zero && !matches!(layer.kind, LayerKind::Gsdn | LayerKind::Igsdn) {
            for (name, _) in layer.tensors() {
                w.tensor_mut(&name).unwrap().data_mut().fill(0.0);
            }
        }
    }
    let mut set = |name: &str, index: &[usize], v: f32| {
        let t = w.tensor_mut(name).unwrap();
        let shape = t.shape().to_vec();
        let mut flat = 0;
        for (i, d) in index.iter().zip(&shape) {
            flat = flat * d + i;
        }
        t.data_mut()[flat] = v;
    };

    let k = config.dims.patch_size;
    for c in 0..m {
        set("reference.weight", &[c, c, k / 2, k / 2], 1.0);
        set("param1.conv2.bias", &[m + c], sigma1);

        // Stage 2: hidden = [g, -g], twice through leaky ReLU, then
        // (l(l(g)) - l(l(-g))) / (1 + s^2) = g.
        set("param2.conv0.weight", &[c, c, 0, 0], 1.0);
        set("param2.conv0.weight", &[m + c, c, 0, 0], -1.0);
        set("param2.conv1.weight", &[c, c, 0, 0], 1.0);
        set("param2.conv1.weight", &[m + c, m + c, 0, 0], 1.0);
        set("param2.conv2.weight", &[c, c, 0, 0], a / (1.0 + s * s));
        set("param2.conv2.weight", &[c, m + c, 0, 0], -a / (1.0 + s * s));
        set("param2.conv2.bias", &[m + c], sigma2);

        // Stage 3: the same identity on mu2, which sits after psi (2M).
        set("param3.conv0.weight", &[c, 2 * m + c, 0, 0], 1.0);
        set("param3.conv0.weight", &[m + c, 2 * m + c, 0, 0], -1.0);
        set("param3.conv1.weight", &[c, c, 0, 0], 1.0);
        set("param3.conv1.weight", &[m + c, m + c, 0, 0], 1.0);
        set("param3.conv2.weight", &[c, c, 0, 0], 1.0 / (1.0 + s * s));
        set("param3.conv2.weight", &[c, m + c, 0, 0], -1.0 / (1.0 + s * s));
        set("param3.conv2.bias", &[m + c], sigma2);
    }

    let lz = config.hyper_support;
    let n = 2 * lz as usize + 2;
    let mut row = vec![1u32; n];
    row[lz as usize] = crate::probability::TOTAL_FREQUENCY - (n as u32 - 1);
    let rows = vec![row; config.dims.hyper_channels];
    w.hyper_cdf = FactorizedCdf::from_frequencies(lz, &rows).expect("valid peaked table");
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_image_repeats() {
        let img = duplicate_texture_image(1, 64, 16);
        for c in 0..3 {
            assert_eq!(img.get3(c, 3, 5), img.get3(c, 19, 37));
        }
    }

    #[test]
    fn softplus_inverse_round_trips() {
        for s in [0.5f32, 1.0, 2.0, 16.0] {
            let raw = softplus_inverse(s);
            assert!((crate::codec::sigma_from_raw(raw) - s).abs() < 1e-4);
        }
    }
}
