//! Embedded invariant suite run by `gric selfcheck`.

use gric_core::codec::{Codec, EntropyMode, ModelConfig, ModelDims, ModelWeights, WeightInit};
use gric_core::coder::{Decoder, Encoder};
use gric_core::fixtures::random_image;
use gric_core::gsdn::GsdnParams;
use gric_core::probability::{gaussian_tail_mass, gaussian_uniform_pmf, QuantizedParams, QuantizedPmf, ScaleTable};
use gric_core::reference::{best_match, masked_patches, similarity_row, TIE_TOLERANCE};
use gric_core::rng::Lcg64;
use gric_core::Tensor;

use crate::container;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Weights used when none are supplied: desk-scale model whose transforms
/// produce non-trivial latents.
pub fn default_weights() -> ModelWeights {
    let mut w = ModelWeights::generate(
        ModelConfig::new(ModelDims::with_latent_channels(32)),
        0,
        WeightInit::FanIn(2.0),
    );
    crate::weights_file::seal(&mut w);
    w
}

pub fn run(weights: &ModelWeights) -> Vec<CheckResult> {
    vec![
        gsdn_gradient(),
        pmf_normalization(),
        coder_round_trip(),
        reference_oracle(),
        codec_round_trip(weights),
    ]
}

pub fn table(results: &[CheckResult]) -> String {
    let mut s = format!("{:<20} {:<6} detail\n", "check", "result");
    for r in results {
        let status = if r.passed { "pass" } else { "FAIL" };
        s.push_str(&format!("{:<20} {:<6} {}\n", r.name, status, r.detail));
    }
    s
}

fn result(name: &'static str, failure: Option<String>, ok: String) -> CheckResult {
    CheckResult {
        name,
        passed: failure.is_none(),
        detail: failure.unwrap_or(ok),
    }
}

fn gsdn_gradient() -> CheckResult {
    let mut rng = Lcg64::new(17);
    let h = 1e-3;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = 1 + rng.below(8) as usize;
        let p = GsdnParams::new(
            (0..n).map(|_| 0.2 + rng.next_f32()).collect(),
            (0..n * n).map(|_| 0.5 * rng.next_f32()).collect(),
            (0..n).map(|_| rng.symmetric(0.5)).collect(),
            (0..n * n).map(|_| rng.symmetric(0.3)).collect(),
        )
        .expect("valid parameters");
        let u: Vec<f64> = (0..n).map(|_| rng.symmetric(2.0) as f64).collect();
        let up: Vec<f64> = (0..n).map(|_| rng.symmetric(1.0) as f64).collect();
        let mut analytic = vec![0.0; n];
        p.input_gradient(&u, &up, &mut analytic);
        let loss = |v: &[f64]| {
            let mut w = vec![0.0; n];
            p.normalize(v, &mut w);
            w.iter().zip(&up).map(|(a, b)| a * b).sum::<f64>()
        };
        let mut diff = 0.0;
        let mut norm = 0.0;
        for k in 0..n {
            let (mut plus, mut minus) = (u.clone(), u.clone());
            plus[k] += h;
            minus[k] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            diff += (analytic[k] - fd).powi(2);
            norm += fd * fd;
        }
        worst = worst.max(diff.sqrt() / norm.sqrt().max(1e-12));
    }
    let failure = (worst > 1e-4).then(|| format!("relative error {worst:.3e} > 1e-4"));
    result("gsdn_gradient", failure, format!("100 cases, worst relative error {worst:.3e}"))
}

fn pmf_normalization() -> CheckResult {
    let table = ScaleTable::default();
    let mut worst = 0.0f64;
    let mut bad_total = None;
    for &sigma in table.levels() {
        for mu in [-3.7f32, -0.5, 0.0, 0.25, 1.0, 12.3] {
            for support in [63u32, 255] {
                let mass: f64 = (-(support as i64)..=support as i64)
                    .map(|k| gaussian_uniform_pmf(k, mu as f64, sigma as f64))
                    .sum();
                let total = mass + gaussian_tail_mass(support, mu as f64, sigma as f64);
                worst = worst.max((total - 1.0).abs());
                let pmf = QuantizedPmf::from_quantized(QuantizedParams::new(mu, sigma, &table), &table, support);
                let freq: u32 = pmf.frequencies().iter().sum();
                if freq != 1 << 16 && bad_total.is_none() {
                    bad_total = Some(format!("sigma {sigma} mu {mu}: total {freq}"));
                }
            }
        }
    }
    let failure = bad_total.or_else(|| (worst > 1e-9).then(|| format!("mass error {worst:.3e} > 1e-9")));
    result(
        "pmf_normalization",
        failure,
        format!("64 levels, max |mass - 1| {worst:.3e}, all totals 65536"),
    )
}

fn coder_round_trip() -> CheckResult {
    let mut rng = Lcg64::new(5);
    let table = ScaleTable::default();
    for seq in 0..10 {
        let params: Vec<(QuantizedPmf, i32)> = (0..2000)
            .map(|_| {
                let sigma = table.level(rng.below(64) as usize) as f64;
                let pmf = QuantizedPmf::gaussian(rng.symmetric(8.0) as f64, sigma, 255);
                let s = rng.symmetric(300.0) as i32 / (1 + rng.below(8) as i32);
                (pmf, s)
            })
            .collect();
        let mut enc = Encoder::new();
        for (pmf, s) in &params {
            if let Err(e) = enc.encode_symbol(pmf, *s) {
                return result("coder_round_trip", Some(format!("sequence {seq}: {e}")), String::new());
            }
        }
        let bytes = enc.finish();
        let mut dec = match Decoder::new(&bytes) {
            Ok(d) => d,
            Err(e) => return result("coder_round_trip", Some(format!("sequence {seq}: {e}")), String::new()),
        };
        for (k, (pmf, s)) in params.iter().enumerate() {
            if dec.decode_symbol(pmf).ok() != Some(*s) {
                return result("coder_round_trip", Some(format!("sequence {seq}: symbol {k} differs")), String::new());
            }
        }
        if dec.remaining() != 0 {
            return result("coder_round_trip", Some(format!("sequence {seq}: trailing bytes")), String::new());
        }
    }
    result("coder_round_trip", None, "10 sequences of 2000 symbols".into())
}

/// Direct O(n^2) search over masked 3x3 neighborhoods read from the grid.
fn brute_force(grid: &Tensor, i: usize) -> Option<usize> {
    let (c, h, w) = grid.dims3().expect("3-d grid");
    let patch = |p: usize| -> Vec<f64> {
        let (py, px) = ((p / w) as isize, (p % w) as isize);
        let mut v = Vec::with_capacity(9 * c);
        for dy in -1..=1isize {
            for dx in -1..=1isize {
                let before = dy < 0 || (dy == 0 && dx < 0);
                let (y, x) = (py + dy, px + dx);
                let inside = y >= 0 && x >= 0 && y < h as isize && x < w as isize;
                for ch in 0..c {
                    v.push(if before && inside { grid.get3(ch, y as usize, x as usize) as f64 } else { 0.0 });
                }
            }
        }
        v
    };
    let qi = patch(i);
    let ni = qi.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut best: Option<(usize, f64)> = None;
    for j in 0..i {
        let qj = patch(j);
        let nj = qj.iter().map(|x| x * x).sum::<f64>().sqrt();
        let s = if ni == 0.0 || nj == 0.0 {
            0.0
        } else {
            qi.iter().zip(&qj).map(|(a, b)| a * b).sum::<f64>() / (ni * nj)
        };
        if best.is_none_or(|(_, b)| s > b + TIE_TOLERANCE) {
            best = Some((j, s));
        }
    }
    best.filter(|(_, s)| *s > 0.0).map(|(j, _)| j)
}

fn reference_oracle() -> CheckResult {
    let mut rng = Lcg64::new(23);
    for case in 0..50 {
        let (c, h, w) = (1 + rng.below(4) as usize, 1 + rng.below(8) as usize, 1 + rng.below(8) as usize);
        // Small alphabet so ties and all-zero neighborhoods are common.
        let grid = Tensor::from_fn(&[c, h, w], |_| rng.below(5) as f32 - 2.0);
        let q = masked_patches(&grid, 3).expect("valid grid");
        for i in 0..h * w {
            let got = best_match(&similarity_row(&q, i), i).source;
            let want = brute_force(&grid, i);
            if got != want {
                return result(
                    "reference_oracle",
                    Some(format!("grid {case} position {i}: {got:?} vs {want:?}")),
                    String::new(),
                );
            }
        }
    }
    result("reference_oracle", None, "50 grids up to 8x8x4".into())
}

fn codec_round_trip(weights: &ModelWeights) -> CheckResult {
    let run = || -> Result<(), String> {
        let codec = Codec::new(weights).map_err(|e| e.to_string())?;
        let image = random_image(1, 32, 32);
        for mode in EntropyMode::ALL {
            let enc = codec.encode(&image, mode).map_err(|e| format!("{mode}: {e}"))?;
            let bytes = container::to_bytes(&enc.bitstream);
            let bs = container::from_bytes(&bytes).map_err(|e| format!("{mode}: {e}"))?;
            let dec = codec.decode(&bs).map_err(|e| format!("{mode}: {e}"))?;
            let expect = codec.synthesize(&enc.latents).map_err(|e| e.to_string())?;
            if dec.latents != enc.latents || dec.hyper_latents != enc.hyper_latents {
                return Err(format!("{mode}: latents differ"));
            }
            if dec.image != expect {
                return Err(format!("{mode}: reconstruction differs"));
            }
        }
        Ok(())
    };
    result("codec_round_trip", run().err(), "32x32, all modes".into())
}
