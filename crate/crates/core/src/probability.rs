//! Probability masses for the latents and hyper-latents, their integer
//! quantization for the range coder, and rate accounting.
//!
//! Latents are modeled as a Gaussian convolved with a unit-width uniform
//! density, so the mass of integer `k` is `Phi((k + 1/2 - mu) / sigma) -
//! Phi((k - 1/2 - mu) / sigma)`. `Phi` is evaluated through `libm::erfc`
//! (a port of the musl/FreeBSD implementation, accurate to about one ulp),
//! always on the tail that keeps the subtraction well conditioned.
//!
//! Encoder and decoder must derive identical integer tables, so continuous
//! parameters are discretized first: `sigma` is clamped and snapped to one of
//! 64 log-spaced levels and `mu` is rounded to a multiple of `2^-16`.

use alloc::collections::BinaryHeap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};

use crate::error::{Error, Result};

/// Frequencies of every [`QuantizedPmf`] sum to `2^PRECISION_BITS`.
pub const PRECISION_BITS: u32 = 16;
pub const TOTAL_FREQUENCY: u32 = 1 << PRECISION_BITS;
/// Width of the two's-complement value emitted after an escape symbol.
pub const ESCAPE_RAW_BITS: u32 = 16;

pub const SCALE_LEVELS: usize = 64;
pub const SCALE_MIN: f32 = 0.11;
pub const SCALE_MAX: f32 = 256.0;

/// Lower tail `Phi(x)` and upper tail `1 - Phi(x)` of the standard normal.
fn tails(x: f64) -> (f64, f64) {
    let s = core::f64::consts::FRAC_1_SQRT_2;
    (0.5 * libm::erfc(-x * s), 0.5 * libm::erfc(x * s))
}

/// Mass of the standard normal on `[a, b]`, `a <= b`.
fn interval_mass(a: f64, b: f64) -> f64 {
    if b <= 0.0 {
        tails(b).0 - tails(a).0
    } else if a >= 0.0 {
        tails(a).1 - tails(b).1
    } else {
        1.0 - tails(a).0 - tails(b).1
    }
}

pub fn normal_cdf(x: f64) -> f64 {
    tails(x).0
}

/// Mass of integer `k` under a Gaussian(`mu`, `sigma`) convolved with
/// `U(-1/2, 1/2)`.
///
/// # Panics
/// If `sigma` is not positive.
pub fn gaussian_uniform_pmf(k: i64, mu: f64, sigma: f64) -> f64 {
    assert!(sigma > 0.0, "gaussian_uniform_pmf: sigma must be positive");
    let k = k as f64;
    interval_mass((k - 0.5 - mu) / sigma, (k + 0.5 - mu) / sigma)
}

/// Mass outside `[-support, support]`.
pub fn gaussian_tail_mass(support: u32, mu: f64, sigma: f64) -> f64 {
    let l = support as f64;
    tails((-l - 0.5 - mu) / sigma).0 + tails((l + 0.5 - mu) / sigma).1
}

/// `-log2 p` in bits.
///
/// # Panics
/// If `p` is not positive.
pub fn rate_bits(p: f64) -> f64 {
    assert!(p > 0.0, "rate_bits: zero probability");
    -libm::log2(p)
}

/// Latent plus hyper-latent bits.
pub fn total_rate(latent_bits: f64, hyper_bits: f64) -> f64 {
    latent_bits + hyper_bits
}

/// Bits per pixel of the unpadded image.
pub fn bits_per_pixel(bits: f64, height: usize, width: usize) -> f64 {
    bits / (height * width) as f64
}

/// Geometric mean over channels of the probability that each decoded symbol
/// receives under its stage-one Gaussian. Each probability is floored at
/// `2^-16` before the logarithm, so the result lies in `(0, 1]`.
pub fn confidence(symbols: &[i32], mu: &[f32], sigma: &[f32]) -> f32 {
    if symbols.is_empty() {
        return 0.0;
    }
    let floor = 1.0 / TOTAL_FREQUENCY as f64;
    let sum_ln: f64 = symbols
        .iter()
        .zip(mu)
        .zip(sigma)
        .map(|((&s, &m), &sd)| libm::log(gaussian_uniform_pmf(s as i64, m as f64, sd as f64).max(floor)))
        .sum();
    let u = libm::exp(sum_ln / symbols.len() as f64) as f32;
    u.min(1.0)
}

/// Monotone table of the allowed standard deviations.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaleTable {
    levels: Vec<f32>,
}

impl Default for ScaleTable {
    fn default() -> Self {
        let ratio = SCALE_MAX as f64 / SCALE_MIN as f64;
        let mut levels: Vec<f32> = (0..SCALE_LEVELS)
            .map(|i| {
                (SCALE_MIN as f64 * libm::pow(ratio, i as f64 / (SCALE_LEVELS - 1) as f64)) as f32
            })
            .collect();
        levels[0] = SCALE_MIN;
        levels[SCALE_LEVELS - 1] = SCALE_MAX;
        Self { levels }
    }
}

impl ScaleTable {
    pub fn new(levels: Vec<f32>) -> Result<Self> {
        if levels.len() != SCALE_LEVELS {
            return Err(Error::InvalidWeights(format!(
                "scale table has {} levels, expected {}",
                levels.len(),
                SCALE_LEVELS
            )));
        }
        if levels[0] != SCALE_MIN || levels[SCALE_LEVELS - 1] != SCALE_MAX {
            return Err(Error::InvalidWeights("scale table must span 0.11..=256".into()));
        }
        if levels.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidWeights("scale table must be strictly increasing".into()));
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> &[f32] {
        &self.levels
    }

    pub fn level(&self, index: usize) -> f32 {
        self.levels[index]
    }

    /// Index of the level nearest to `sigma` after clamping; ties go to the
    /// lower level. NaN maps to the lowest level.
    pub fn snap(&self, sigma: f32) -> usize {
        let s = if sigma.is_nan() {
            SCALE_MIN
        } else {
            sigma.clamp(SCALE_MIN, SCALE_MAX)
        };
        let upper = self.levels.partition_point(|&l| l < s);
        if upper == 0 {
            return 0;
        }
        if upper == self.levels.len() {
            return upper - 1;
        }
        let (lo, hi) = (self.levels[upper - 1], self.levels[upper]);
        if (s - lo) <= (hi - s) {
            upper - 1
        } else {
            upper
        }
    }
}

/// Nearest multiple of `2^-16`; halves round away from zero.
pub fn quantize_mean(mu: f32) -> f64 {
    let scale = TOTAL_FREQUENCY as f64;
    let mu = if mu.is_finite() { mu as f64 } else { 0.0 };
    libm::round(mu * scale) / scale
}

/// Discretized Gaussian parameters for one symbol.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuantizedParams {
    pub mu: f64,
    pub scale_index: u8,
}

impl QuantizedParams {
    pub fn new(mu: f32, sigma: f32, table: &ScaleTable) -> Self {
        Self {
            mu: quantize_mean(mu),
            scale_index: table.snap(sigma) as u8,
        }
    }

    pub fn sigma(&self, table: &ScaleTable) -> f32 {
        table.level(self.scale_index as usize)
    }
}

/// Quantizes every `(mu, sigma)` pair of a stage.
pub fn quantize_gaussian_params(mu: &[f32], sigma: &[f32], table: &ScaleTable) -> Vec<QuantizedParams> {
    mu.iter()
        .zip(sigma)
        .map(|(&m, &s)| QuantizedParams::new(m, s, table))
        .collect()
}

/// Integer frequency table over `[min_symbol, min_symbol + n)` followed by
/// one escape bucket. Frequencies sum to [`TOTAL_FREQUENCY`] and every bucket
/// has frequency of at least one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantizedPmf {
    min_symbol: i32,
    /// Cumulative frequencies, `buckets + 1` entries from 0 to the total.
    cdf: Vec<u32>,
}

/// Where a symbol lands in a [`QuantizedPmf`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Slot {
    pub cumulative: u32,
    pub frequency: u32,
    pub escaped: bool,
}

impl QuantizedPmf {
    /// Table for the discretized Gaussian over `[-support, support]`, tail
    /// mass going to the escape bucket.
    pub fn gaussian(mu: f64, sigma: f64, support: u32) -> Self {
        assert!(sigma > 0.0 && support >= 1);
        let n = 2 * support as usize + 1;
        let lo = -(support as i64);
        let mut ideal = Vec::with_capacity(n + 1);
        for i in 0..n {
            ideal.push(gaussian_uniform_pmf(lo + i as i64, mu, sigma));
        }
        ideal.push(gaussian_tail_mass(support, mu, sigma));
        let freqs = quantize_masses(&ideal);
        Self::from_frequencies(lo as i32, &freqs).expect("quantized masses are valid")
    }

    pub fn from_quantized(params: QuantizedParams, table: &ScaleTable, support: u32) -> Self {
        Self::gaussian(params.mu, params.sigma(table) as f64, support)
    }

    /// `freqs` holds the in-support symbols followed by the escape bucket.
    pub fn from_frequencies(min_symbol: i32, freqs: &[u32]) -> Result<Self> {
        if freqs.len() < 2 {
            return Err(Error::InvalidWeights("frequency table needs a symbol and an escape".into()));
        }
        if freqs.contains(&0) {
            return Err(Error::InvalidWeights("zero frequency in table".into()));
        }
        let mut cdf = Vec::with_capacity(freqs.len() + 1);
        let mut acc = 0u64;
        cdf.push(0);
        for &f in freqs {
            acc += f as u64;
            if acc > TOTAL_FREQUENCY as u64 {
                break;
            }
            cdf.push(acc as u32);
        }
        if acc != TOTAL_FREQUENCY as u64 {
            return Err(Error::InvalidWeights(format!(
                "frequencies sum to {acc}, expected {TOTAL_FREQUENCY}"
            )));
        }
        Ok(Self { min_symbol, cdf })
    }

    /// Uniform table over `[-support, support]` plus escape.
    pub fn uniform(support: u32) -> Self {
        let n = 2 * support as usize + 2;
        let base = TOTAL_FREQUENCY / n as u32;
        let extra = (TOTAL_FREQUENCY - base * n as u32) as usize;
        let freqs: Vec<u32> = (0..n).map(|i| base + (i < extra) as u32).collect();
        Self::from_frequencies(-(support as i32), &freqs).expect("uniform table is valid")
    }

    pub fn min_symbol(&self) -> i32 {
        self.min_symbol
    }

    pub fn max_symbol(&self) -> i32 {
        self.min_symbol + self.symbol_count() as i32 - 1
    }

    /// In-support symbols, not counting the escape bucket.
    pub fn symbol_count(&self) -> usize {
        self.cdf.len() - 2
    }

    pub fn cdf(&self) -> &[u32] {
        &self.cdf
    }

    pub fn frequencies(&self) -> Vec<u32> {
        self.cdf.windows(2).map(|w| w[1] - w[0]).collect()
    }

    fn bucket(&self, symbol: i32) -> usize {
        let offset = symbol as i64 - self.min_symbol as i64;
        if offset >= 0 && (offset as usize) < self.symbol_count() {
            offset as usize
        } else {
            self.symbol_count()
        }
    }

    pub fn slot(&self, symbol: i32) -> Slot {
        let b = self.bucket(symbol);
        Slot {
            cumulative: self.cdf[b],
            frequency: self.cdf[b + 1] - self.cdf[b],
            escaped: b == self.symbol_count(),
        }
    }

    /// Bucket containing cumulative value `target < TOTAL_FREQUENCY`.
    pub fn bucket_for(&self, target: u32) -> usize {
        self.cdf.partition_point(|&c| c <= target) - 1
    }

    /// Symbol of an in-support bucket; `None` for the escape bucket.
    pub fn bucket_symbol(&self, bucket: usize) -> Option<i32> {
        (bucket < self.symbol_count()).then(|| self.min_symbol + bucket as i32)
    }

    pub fn bucket_slot(&self, bucket: usize) -> Slot {
        Slot {
            cumulative: self.cdf[bucket],
            frequency: self.cdf[bucket + 1] - self.cdf[bucket],
            escaped: bucket == self.symbol_count(),
        }
    }

    pub fn probability(&self, symbol: i32) -> f64 {
        self.slot(symbol).frequency as f64 / TOTAL_FREQUENCY as f64
    }

    /// Coded length of `symbol`, including the raw bits after an escape.
    pub fn bits(&self, symbol: i32) -> f64 {
        let slot = self.slot(symbol);
        let raw = if slot.escaped { ESCAPE_RAW_BITS as f64 } else { 0.0 };
        PRECISION_BITS as f64 - libm::log2(slot.frequency as f64) + raw
    }
}

/// Largest-remainder rounding of probabilities onto `TOTAL_FREQUENCY` counts
/// with a floor of one count per bucket.
fn quantize_masses(masses: &[f64]) -> Vec<u32> {
    let total = TOTAL_FREQUENCY as f64;
    let ideal: Vec<f64> = masses.iter().map(|m| m.max(0.0) * total).collect();
    let mut freqs: Vec<u32> = ideal.iter().map(|v| (libm::floor(*v) as u32).max(1)).collect();
    let assigned: i64 = freqs.iter().map(|&f| f as i64).sum();
    let mut diff = TOTAL_FREQUENCY as i64 - assigned;
    if diff > 0 {
        let mut order: Vec<usize> = (0..freqs.len()).collect();
        let remainder = |i: usize| ideal[i] - freqs[i] as f64;
        order.sort_by(|&a, &b| {
            remainder(b)
                .partial_cmp(&remainder(a))
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        for &i in order.iter().cycle() {
            if diff == 0 {
                break;
            }
            freqs[i] += 1;
            diff -= 1;
        }
    } else if diff < 0 {
        // Take the surplus from whichever bucket is currently largest, so
        // buckets end at min(own frequency, common water level).
        let mut heap: BinaryHeap<(u32, Reverse<usize>)> = freqs
            .iter()
            .enumerate()
            .filter(|(_, f)| **f > 1)
            .map(|(i, f)| (*f, Reverse(i)))
            .collect();
        while diff < 0 {
            let (f, Reverse(i)) = heap.pop().expect("surplus is bounded by the total");
            freqs[i] = f - 1;
            diff += 1;
            if f - 1 > 1 {
                heap.push((f - 1, Reverse(i)));
            }
        }
    }
    freqs
}

/// Per-channel integer tables for the hyper-latents.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FactorizedCdf {
    support: u32,
    tables: Vec<QuantizedPmf>,
}

impl FactorizedCdf {
    pub fn new(support: u32, tables: Vec<QuantizedPmf>) -> Result<Self> {
        for t in &tables {
            if t.min_symbol() != -(support as i32) || t.symbol_count() != 2 * support as usize + 1 {
                return Err(Error::InvalidWeights(format!(
                    "hyper table does not cover [-{support}, {support}]"
                )));
            }
        }
        Ok(Self { support, tables })
    }

    /// `rows[c]` holds `2 * support + 2` frequencies for channel `c`.
    pub fn from_frequencies(support: u32, rows: &[Vec<u32>]) -> Result<Self> {
        let tables = rows
            .iter()
            .map(|r| QuantizedPmf::from_frequencies(-(support as i32), r))
            .collect::<Result<Vec<_>>>()?;
        Self::new(support, tables)
    }

    pub fn uniform(channels: usize, support: u32) -> Self {
        Self {
            support,
            tables: vec![QuantizedPmf::uniform(support); channels],
        }
    }

    pub fn support(&self) -> u32 {
        self.support
    }

    pub fn channels(&self) -> usize {
        self.tables.len()
    }

    pub fn table(&self, channel: usize) -> Result<&QuantizedPmf> {
        self.tables
            .get(channel)
            .ok_or_else(|| Error::config("hyper_cdf", format!("no table for channel {channel}")))
    }

    pub fn tables(&self) -> &[QuantizedPmf] {
        &self.tables
    }
}

/// Probability of hyper-latent `k` in `channel`; symbols outside the support
/// get the escape bucket's probability.
pub fn factorized_pmf(k: i32, channel: usize, tables: &FactorizedCdf) -> Result<f64> {
    Ok(tables.table(channel)?.probability(k))
}

#[cfg(test)]
mod tests {
    use super::*;

    // Oracle for Phi: midpoint-free composite Simpson quadrature of the
    // normal density, independent of erfc.
    fn phi_quadrature(x: f64) -> f64 {
        let n = 200_000;
        let (a, b) = (0.0, x.abs());
        let h = (b - a) / n as f64;
        let f = |t: f64| libm::exp(-0.5 * t * t) / libm::sqrt(2.0 * core::f64::consts::PI);
        let mut s = f(a) + f(b);
        for i in 1..n {
            let t = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 * f(t) } else { 2.0 * f(t) };
        }
        let half = s * h / 3.0;
        if x >= 0.0 {
            0.5 + half
        } else {
            0.5 - half
        }
    }

    #[test]
    fn cdf_matches_quadrature() {
        for &x in &[-4.0, -1.3, -0.5, 0.0, 0.25, 1.0, 2.5] {
            assert!((normal_cdf(x) - phi_quadrature(x)).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn standard_normal_mass_at_zero() {
        let oracle = phi_quadrature(0.5) - phi_quadrature(-0.5);
        assert!((oracle - 0.382_924_9).abs() < 1e-6);
        assert!((gaussian_uniform_pmf(0, 0.0, 1.0) - 0.382_924_9).abs() < 1e-6);
        assert!((rate_bits(gaussian_uniform_pmf(0, 0.0, 1.0)) - 1.384_867).abs() < 1e-5);
        assert!((rate_bits(gaussian_uniform_pmf(0, 0.0, 1.0)) + libm::log2(oracle)).abs() < 1e-5);
    }

    #[test]
    fn shift_and_reflection_identities() {
        let mut rng = crate::rng::Lcg64::new(5);
        for _ in 0..200 {
            let k = rng.below(21) as i64 - 10;
            let mu = rng.symmetric(5.0) as f64;
            let sigma = 0.11 + 10.0 * rng.next_f32() as f64;
            let a = gaussian_uniform_pmf(k, mu + 1.0, sigma);
            let b = gaussian_uniform_pmf(k - 1, mu, sigma);
            assert!((a - b).abs() < 1e-12);
            let c = gaussian_uniform_pmf(-k, -mu, sigma);
            assert!((gaussian_uniform_pmf(k, mu, sigma) - c).abs() < 1e-12);
        }
    }

    #[test]
    #[should_panic]
    fn non_positive_sigma_panics() {
        gaussian_uniform_pmf(0, 0.0, 0.0);
    }

    #[test]
    fn rate_examples() {
        assert_eq!(rate_bits(0.5), 1.0);
        assert_eq!(rate_bits(1.0 / 65536.0), 16.0);
        assert!((bits_per_pixel(total_rate(1000.0, 200.0), 100, 100) - 0.12).abs() < 1e-12);
        assert_eq!(total_rate(321.5, 0.0), 321.5);
    }

    #[test]
    fn scale_table_shape() {
        let t = ScaleTable::default();
        assert_eq!(t.levels().len(), 64);
        assert_eq!(t.levels()[0], 0.11);
        assert_eq!(t.levels()[63], 256.0);
        assert!(t.levels().windows(2).all(|w| w[0] < w[1]));
        assert!(ScaleTable::new(t.levels().to_vec()).is_ok());
        let mut bad = t.levels().to_vec();
        bad.swap(3, 4);
        assert!(ScaleTable::new(bad).is_err());
    }

    #[test]
    fn snapping_rules() {
        let t = ScaleTable::default();
        assert_eq!(t.snap(0.05), 0);
        assert_eq!(t.snap(1e9), 63);
        for (i, &l) in t.levels().iter().enumerate() {
            assert_eq!(t.snap(l), i);
        }
        // Exactly between two levels in f32: tie goes down.
        let (lo, hi) = (t.level(10), t.level(11));
        let mid = lo + (hi - lo) / 2.0;
        if mid - lo == hi - mid {
            assert_eq!(t.snap(mid), 10);
        }
        assert_eq!(t.snap(f32::NAN), 0);
    }

    #[test]
    fn mean_rounding() {
        let q = quantize_mean(0.3);
        let oracle = libm::round(0.3f32 as f64 * 65536.0) / 65536.0;
        assert_eq!(q, oracle);
        assert!((q - 0.3).abs() <= 0.5 / 65536.0 + 1e-9);
        assert_eq!(quantize_mean(2.0), 2.0);
    }

    #[test]
    fn peaked_pmf_normalizes() {
        let pmf = QuantizedPmf::gaussian(0.0, 0.11, 8);
        let f = pmf.frequencies();
        assert_eq!(f.iter().sum::<u32>(), TOTAL_FREQUENCY);
        let zero = f[8];
        assert!(f.iter().enumerate().all(|(i, &v)| i == 8 || v < zero));
        assert!(f.iter().all(|&v| v >= 1));
    }

    #[test]
    fn symmetric_pmf_is_symmetric() {
        for &sigma in &[0.11, 0.7, 3.0, 40.0] {
            let pmf = QuantizedPmf::gaussian(0.0, sigma, 20);
            for k in 1..=20 {
                let d = pmf.slot(k).frequency as i64 - pmf.slot(-k).frequency as i64;
                assert!(d.abs() <= 1, "sigma={sigma} k={k} d={d}");
            }
        }
    }

    #[test]
    fn rebuilt_pmf_is_identical() {
        let t = ScaleTable::default();
        let p = QuantizedParams::new(1.37, 2.2, &t);
        let a = QuantizedPmf::from_quantized(p, &t, 255);
        let b = QuantizedPmf::gaussian(p.mu, t.level(p.scale_index as usize) as f64, 255);
        assert_eq!(a, b);
    }

    #[test]
    fn slots_and_buckets() {
        let pmf = QuantizedPmf::gaussian(0.4, 1.5, 4);
        assert_eq!(pmf.min_symbol(), -4);
        assert_eq!(pmf.max_symbol(), 4);
        for s in -4..=4 {
            let slot = pmf.slot(s);
            assert!(!slot.escaped);
            assert_eq!(pmf.bucket_symbol(pmf.bucket_for(slot.cumulative)), Some(s));
            assert_eq!(pmf.bucket_for(slot.cumulative + slot.frequency - 1), (s + 4) as usize);
        }
        assert!(pmf.slot(5).escaped);
        assert!(pmf.slot(-100).escaped);
        assert_eq!(pmf.bits(7), pmf.bits(-7));
        assert!(pmf.bits(7) >= 16.0);
    }

    #[test]
    fn frequency_validation() {
        assert!(QuantizedPmf::from_frequencies(0, &[65535, 1]).is_ok());
        assert!(QuantizedPmf::from_frequencies(0, &[65535, 0, 1]).is_err());
        assert!(QuantizedPmf::from_frequencies(0, &[65535, 2]).is_err());
        assert!(QuantizedPmf::from_frequencies(0, &[65536]).is_err());
    }

    #[test]
    fn uniform_factorized_tables() {
        let cdf = FactorizedCdf::from_frequencies(1, &[vec![16384; 4]]).unwrap();
        for k in -1..=1 {
            let p = factorized_pmf(k, 0, &cdf).unwrap();
            assert!((p - 0.25).abs() < 1e-12);
        }
        let sum: u32 = cdf.table(0).unwrap().frequencies().iter().sum();
        assert_eq!(sum, TOTAL_FREQUENCY);
        assert!(factorized_pmf(0, 1, &cdf).is_err());
        let three = FactorizedCdf::uniform(2, 63);
        let f = three.table(1).unwrap().frequencies();
        assert!(f.iter().all(|&v| v == 512));
        assert!(FactorizedCdf::from_frequencies(2, &[vec![16384; 4]]).is_err());
    }

    #[test]
    fn confidence_examples() {
        let u = confidence(&[0], &[0.0], &[1.0]);
        assert!((u - 0.382_924_9).abs() < 1e-6);
        let p = gaussian_uniform_pmf(1, 0.3, 0.8) as f32;
        let u = confidence(&[1, 1, 1], &[0.3; 3], &[0.8; 3]);
        assert!((u - p).abs() < 1e-6);
        let u = confidence(&[400], &[0.0], &[0.11]);
        assert!(u > 0.0 && u <= 1.0);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn confidence_ignores_channel_order(
                vals in proptest::collection::vec((-5i32..5, -3.0f32..3.0, 0.11f32..6.0), 1..12),
                rot in 0usize..12,
            ) {
                let s: Vec<i32> = vals.iter().map(|v| v.0).collect();
                let m: Vec<f32> = vals.iter().map(|v| v.1).collect();
                let d: Vec<f32> = vals.iter().map(|v| v.2).collect();
                let r = rot % s.len();
                let rs = [&s[r..], &s[..r]].concat();
                let rm = [&m[r..], &m[..r]].concat();
                let rd = [&d[r..], &d[..r]].concat();
                let a = confidence(&s, &m, &d);
                let b = confidence(&rs, &rm, &rd);
                prop_assert!((a - b).abs() <= 1e-6 * a.max(1e-30));
                prop_assert!(a > 0.0 && a <= 1.0);
            }

            #[test]
            fn every_table_totals_exactly(mu in -300.0f32..300.0, idx in 0usize..64, support in 1u32..300) {
                let t = ScaleTable::default();
                let pmf = QuantizedPmf::gaussian(quantize_mean(mu), t.level(idx) as f64, support);
                let f = pmf.frequencies();
                prop_assert_eq!(f.iter().map(|&v| v as u64).sum::<u64>(), TOTAL_FREQUENCY as u64);
                prop_assert!(f.iter().all(|&v| v >= 1));
            }
        }
    }
}
