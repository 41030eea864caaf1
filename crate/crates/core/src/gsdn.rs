//! Generalized subtractive and divisive normalization.
//!
//! At every spatial location, with `u` the channel vector:
//!
//! ```text
//! GSDN:   w_i = (u_i - (nu_i + sum_j tau_ij u_j)) / sqrt(beta_i + sum_j gamma_ij u_j^2)
//! IGSDN:  u_i = w_i * sqrt(beta_i + sum_j gamma_ij w_j^2) + (nu_i + sum_j tau_ij w_j)
//! ```
//!
//! The sums include `j = i`. Parameters are shared across spatial positions.
//! The decoder-side IGSDN carries its own parameter set; it is not required
//! to invert a particular GSDN instance.
//!
//! Per-location arithmetic runs in `f64` and is rounded back to `f32`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Lower bound enforced on every `beta_i`.
pub const BETA_MIN: f32 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GsdnParams {
    channels: usize,
    beta: Vec<f32>,
    /// Row-major `gamma[i][j]`.
    gamma: Vec<f32>,
    nu: Vec<f32>,
    /// Row-major `tau[i][j]`.
    tau: Vec<f32>,
}

impl GsdnParams {
    /// Builds a parameter set, rejecting any that violates the invariants.
    pub fn new(beta: Vec<f32>, gamma: Vec<f32>, nu: Vec<f32>, tau: Vec<f32>) -> Result<Self> {
        let p = Self::unchecked(beta, gamma, nu, tau)?;
        if p.beta.iter().any(|b| !(*b >= BETA_MIN)) {
            return Err(Error::InvalidWeights(format!("beta must be >= {BETA_MIN}")));
        }
        if p.gamma.iter().any(|g| !(*g >= 0.0)) {
            return Err(Error::InvalidWeights("gamma must be non-negative".into()));
        }
        Ok(p)
    }

    /// Load-time construction: non-finite values and negative `beta` are
    /// rejected; `beta` below [`BETA_MIN`] is raised to it and negative
    /// `gamma` entries are raised to zero.
    pub fn sanitized(beta: Vec<f32>, gamma: Vec<f32>, nu: Vec<f32>, tau: Vec<f32>) -> Result<Self> {
        let mut p = Self::unchecked(beta, gamma, nu, tau)?;
        let finite = |v: &[f32]| v.iter().all(|x| x.is_finite());
        if !(finite(&p.beta) && finite(&p.gamma) && finite(&p.nu) && finite(&p.tau)) {
            return Err(Error::InvalidWeights("non-finite normalization parameter".into()));
        }
        if p.beta.iter().any(|b| *b < 0.0) {
            return Err(Error::InvalidWeights("negative beta".into()));
        }
        for b in &mut p.beta {
            *b = b.max(BETA_MIN);
        }
        for g in &mut p.gamma {
            *g = g.max(0.0);
        }
        Ok(p)
    }

    fn unchecked(beta: Vec<f32>, gamma: Vec<f32>, nu: Vec<f32>, tau: Vec<f32>) -> Result<Self> {
        let n = beta.len();
        if n == 0 || nu.len() != n || gamma.len() != n * n || tau.len() != n * n {
            return Err(Error::config(
                "gsdn",
                format!(
                    "inconsistent parameter sizes beta={} gamma={} nu={} tau={}",
                    n,
                    gamma.len(),
                    nu.len(),
                    tau.len()
                ),
            ));
        }
        Ok(Self {
            channels: n,
            beta,
            gamma,
            nu,
            tau,
        })
    }

    /// `beta = 1`, everything else zero: GSDN and IGSDN are both the identity.
    pub fn identity(channels: usize) -> Self {
        Self {
            channels,
            beta: vec![1.0; channels],
            gamma: vec![0.0; channels * channels],
            nu: vec![0.0; channels],
            tau: vec![0.0; channels * channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn beta(&self) -> &[f32] {
        &self.beta
    }

    pub fn gamma(&self) -> &[f32] {
        &self.gamma
    }

    pub fn nu(&self) -> &[f32] {
        &self.nu
    }

    pub fn tau(&self) -> &[f32] {
        &self.tau
    }

    /// Two vectors and two matrices: `2 (N + N^2)`.
    pub fn parameter_count(&self) -> usize {
        2 * (self.channels + self.channels * self.channels)
    }

    fn row<'a>(&self, m: &'a [f32], i: usize) -> &'a [f32] {
        &m[i * self.channels..(i + 1) * self.channels]
    }

    /// `(numerator, denominator)` of the forward transform for channel `i`.
    fn parts(&self, u: &[f64], i: usize) -> (f64, f64) {
        let mut sub = self.nu[i] as f64;
        let mut div = self.beta[i] as f64;
        for ((t, g), uj) in self.row(&self.tau, i).iter().zip(self.row(&self.gamma, i)).zip(u) {
            sub += *t as f64 * uj;
            div += *g as f64 * uj * uj;
        }
        (u[i] - sub, libm::sqrt(div))
    }

    /// Forward transform of one channel vector.
    pub fn normalize(&self, u: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.channels) {
            let (num, den) = self.parts(u, i);
            *o = num / den;
        }
    }

    /// Inverse-direction transform of one channel vector.
    pub fn denormalize(&self, w: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.channels) {
            let mut add = self.nu[i] as f64;
            let mut mul = self.beta[i] as f64;
            for ((t, g), wj) in self.row(&self.tau, i).iter().zip(self.row(&self.gamma, i)).zip(w) {
                add += *t as f64 * wj;
                mul += *g as f64 * wj * wj;
            }
            *o = w[i] * libm::sqrt(mul) + add;
        }
    }

    /// `dL/du` at one location for `L = <upstream, normalize(u)>`.
    pub fn input_gradient(&self, u: &[f64], upstream: &[f64], out: &mut [f64]) {
        let n = self.channels;
        out[..n].fill(0.0);
        for i in 0..n {
            let (num, den) = self.parts(u, i);
            let g = upstream[i];
            if g == 0.0 {
                continue;
            }
            let inv = 1.0 / den;
            let cubic = num * inv * inv * inv;
            let tau = self.row(&self.tau, i);
            let gamma = self.row(&self.gamma, i);
            for k in 0..n {
                let direct = if k == i { 1.0 } else { 0.0 } - tau[k] as f64;
                out[k] += g * (direct * inv - cubic * gamma[k] as f64 * u[k]);
            }
        }
    }
}

fn per_location(
    input: &Tensor,
    p: &GsdnParams,
    layer: &str,
    mut f: impl FnMut(&[f64], usize, &mut [f64]),
) -> Result<Tensor> {
    let (c, h, w) = input.dims3()?;
    if c != p.channels {
        return Err(Error::config(
            layer,
            format!("input has {} channels, parameters have {}", c, p.channels),
        ));
    }
    let plane = h * w;
    let data = input.data();
    let mut out = vec![0.0f32; data.len()];
    let mut vec_in = vec![0.0f64; c];
    let mut vec_out = vec![0.0f64; c];
    for pos in 0..plane {
        for ch in 0..c {
            vec_in[ch] = data[ch * plane + pos] as f64;
        }
        f(&vec_in, pos, &mut vec_out);
        for ch in 0..c {
            out[ch * plane + pos] = vec_out[ch] as f32;
        }
    }
    Tensor::new(input.shape(), out)
}

pub fn gsdn_forward(u: &Tensor, p: &GsdnParams) -> Result<Tensor> {
    per_location(u, p, "gsdn", |v, _, out| p.normalize(v, out))
}

pub fn igsdn_forward(w: &Tensor, p_hat: &GsdnParams) -> Result<Tensor> {
    per_location(w, p_hat, "igsdn", |v, _, out| p_hat.denormalize(v, out))
}

pub fn gsdn_input_gradient(u: &Tensor, p: &GsdnParams, upstream: &Tensor) -> Result<Tensor> {
    if upstream.shape() != u.shape() {
        return Err(Error::config("gsdn", "upstream gradient shape mismatch"));
    }
    let (c, h, w) = u.dims3()?;
    let plane = h * w;
    let up = upstream.data();
    let mut g = vec![0.0f64; c];
    per_location(u, p, "gsdn", |v, pos, out| {
        for ch in 0..c {
            g[ch] = up[ch * plane + pos] as f64;
        }
        p.input_gradient(v, &g, out)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Lcg64;

    fn scalar(beta: f32, gamma: f32, nu: f32, tau: f32) -> GsdnParams {
        GsdnParams::new(vec![beta], vec![gamma], vec![nu], vec![tau]).unwrap()
    }

    fn one(v: f32) -> Tensor {
        Tensor::new(&[1, 1, 1], vec![v]).unwrap()
    }

    fn random_params(n: usize, rng: &mut Lcg64) -> GsdnParams {
        GsdnParams::new(
            (0..n).map(|_| 0.2 + rng.next_f32()).collect(),
            (0..n * n).map(|_| 0.5 * rng.next_f32()).collect(),
            (0..n).map(|_| rng.symmetric(0.5)).collect(),
            (0..n * n).map(|_| rng.symmetric(0.3)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn forward_examples() {
        let y = gsdn_forward(&one(2.0), &scalar(1.0, 0.0, 0.0, 0.0)).unwrap();
        assert_eq!(y.data(), &[2.0]);
        let y = gsdn_forward(&one(2.0), &scalar(1.0, 1.0, 0.0, 0.0)).unwrap();
        assert!((y.data()[0] - 0.894_427_2).abs() < 1e-6);
        let y = gsdn_forward(&one(2.0), &scalar(1.0, 0.0, 0.5, 0.25)).unwrap();
        assert_eq!(y.data(), &[1.0]);
    }

    #[test]
    fn inverse_examples() {
        let u = igsdn_forward(&one(1.0), &scalar(1.0, 0.0, 0.5, 0.0)).unwrap();
        assert_eq!(u.data(), &[1.5]);
        let mut rng = Lcg64::new(3);
        let mut p = random_params(3, &mut rng);
        p.nu.fill(0.0);
        let u = igsdn_forward(&Tensor::zeros(&[3, 2, 2]), &p).unwrap();
        assert!(u.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn affine_case_round_trips() {
        let mut rng = Lcg64::new(9);
        for n in [1, 2, 4, 8] {
            let beta: Vec<f32> = (0..n).map(|_| 0.1 + 3.0 * rng.next_f32()).collect();
            let nu: Vec<f32> = (0..n).map(|_| rng.symmetric(2.0)).collect();
            let p = GsdnParams::new(beta, vec![0.0; n * n], nu, vec![0.0; n * n]).unwrap();
            let u = Tensor::from_fn(&[n, 3, 3], |_| rng.symmetric(5.0));
            let back = igsdn_forward(&gsdn_forward(&u, &p).unwrap(), &p).unwrap();
            for (a, b) in u.data().iter().zip(back.data()) {
                assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn validation_and_sanitizing() {
        assert!(GsdnParams::new(vec![0.0], vec![0.0], vec![0.0], vec![0.0]).is_err());
        assert!(GsdnParams::new(vec![1.0], vec![-0.1], vec![0.0], vec![0.0]).is_err());
        assert!(GsdnParams::sanitized(vec![-1.0], vec![0.0], vec![0.0], vec![0.0]).is_err());
        assert!(GsdnParams::sanitized(vec![f32::NAN], vec![0.0], vec![0.0], vec![0.0]).is_err());
        let p = GsdnParams::sanitized(vec![0.0], vec![-0.5], vec![0.0], vec![0.0]).unwrap();
        assert_eq!(p.beta(), &[BETA_MIN]);
        assert_eq!(p.gamma(), &[0.0]);
        assert!(GsdnParams::new(vec![1.0; 2], vec![0.0; 3], vec![0.0; 2], vec![0.0; 4]).is_err());
    }

    #[test]
    fn parameter_count() {
        assert_eq!(GsdnParams::identity(192).parameter_count(), 2 * (192 + 192 * 192));
    }

    #[test]
    fn zero_denominator_is_impossible() {
        let p = GsdnParams::sanitized(vec![0.0; 2], vec![0.0; 4], vec![0.0; 2], vec![0.0; 4]).unwrap();
        let y = gsdn_forward(&Tensor::from_fn(&[2, 2, 2], |i| i as f32 * 1e-3), &p).unwrap();
        assert!(y.is_finite());
    }

    #[test]
    fn channel_mismatch_is_config_error() {
        let err = gsdn_forward(&Tensor::zeros(&[2, 1, 1]), &GsdnParams::identity(3)).unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
    }

    #[test]
    fn gradient_special_cases() {
        let p = scalar(1.0, 0.0, 0.3, 0.0);
        let up = Tensor::from_fn(&[1, 2, 2], |i| i as f32 - 1.5);
        let u = Tensor::from_fn(&[1, 2, 2], |i| i as f32);
        assert_eq!(gsdn_input_gradient(&u, &p, &up).unwrap(), up);
        let mut rng = Lcg64::new(4);
        let p = random_params(4, &mut rng);
        let u = Tensor::from_fn(&[4, 2, 2], |_| rng.symmetric(2.0));
        let g = gsdn_input_gradient(&u, &p, &Tensor::zeros(&[4, 2, 2])).unwrap();
        assert!(g.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = Lcg64::new(17);
        let h = 1e-3;
        for case in 0..100 {
            let n = [1, 2, 4, 8][case % 4];
            let p = random_params(n, &mut rng);
            let u: Vec<f64> = (0..n).map(|_| rng.symmetric(2.0) as f64).collect();
            let up: Vec<f64> = (0..n).map(|_| rng.symmetric(1.0) as f64).collect();
            let mut analytic = vec![0.0; n];
            p.input_gradient(&u, &up, &mut analytic);
            let loss = |v: &[f64]| {
                let mut w = vec![0.0; n];
                p.normalize(v, &mut w);
                w.iter().zip(&up).map(|(a, b)| a * b).sum::<f64>()
            };
            let mut fd = vec![0.0; n];
            for k in 0..n {
                let mut plus = u.clone();
                let mut minus = u.clone();
                plus[k] += h;
                minus[k] -= h;
                fd[k] = (loss(&plus) - loss(&minus)) / (2.0 * h);
            }
            let diff = libm::sqrt(analytic.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>());
            let scale = libm::sqrt(fd.iter().map(|v| v * v).sum::<f64>()).max(1e-12);
            assert!(diff / scale <= 1e-4, "case {case}: relative error {}", diff / scale);
        }
    }

    #[test]
    fn permuting_channels_permutes_output() {
        let mut rng = Lcg64::new(21);
        let n = 4;
        let p = random_params(n, &mut rng);
        let perm = [2usize, 0, 3, 1];
        let permuted = GsdnParams::new(
            perm.iter().map(|&i| p.beta[i]).collect(),
            (0..n * n).map(|k| p.gamma[perm[k / n] * n + perm[k % n]]).collect(),
            perm.iter().map(|&i| p.nu[i]).collect(),
            (0..n * n).map(|k| p.tau[perm[k / n] * n + perm[k % n]]).collect(),
        )
        .unwrap();
        let u = Tensor::from_fn(&[n, 3, 2], |_| rng.symmetric(2.0));
        let plane = 6;
        let u_perm = Tensor::from_fn(&[n, 3, 2], |k| u.data()[perm[k / plane] * plane + k % plane]);
        let w = gsdn_forward(&u, &p).unwrap();
        let w_perm = gsdn_forward(&u_perm, &permuted).unwrap();
        for k in 0..w.len() {
            let expect = w.data()[perm[k / plane] * plane + k % plane];
            assert!((w_perm.data()[k] - expect).abs() <= 1e-6);
        }
    }
}
