//! Rate-report emitters: per-stage bit maps as PGM, match table and stage
//! deltas as CSV.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use gric_core::codec::RateEstimate;

use crate::error::{GricError, Result};

/// Binary 8-bit PGM, values scaled so that `max` maps to 255.
pub fn encode_pgm(values: &[f64], width: usize, height: usize, max: f64) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
    out.extend(values.iter().map(|v| (v.max(0.0) * scale).round().min(255.0) as u8));
    out
}

/// Columns: `i,j,S,U,bits_stage1,bits_stage2,bits_stage3`. `j` is empty when
/// no earlier position matched; missing stages are empty.
pub fn matches_csv(est: &RateEstimate) -> String {
    let mut s = String::from("i,j,S,U,bits_stage1,bits_stage2,bits_stage3\n");
    for (i, pos) in est.trace.positions.iter().enumerate() {
        let (j, sim, conf) = match pos.reference {
            Some(m) => (m.source.map(|j| j.to_string()).unwrap_or_default(), m.similarity, m.confidence),
            None => (String::new(), 0.0, 0.0),
        };
        let _ = write!(s, "{i},{j},{sim:.6},{conf:.6}");
        for stage in 0..3 {
            match est.stage_bits.get(stage) {
                Some(bits) => {
                    let _ = write!(s, ",{:.6}", bits[i]);
                }
                None => s.push(','),
            }
        }
        s.push('\n');
    }
    s
}

/// Columns: `i,y,x,delta_2_1,delta_3_2`, the signed change in bits from one
/// stage to the next (negative means the later stage is cheaper).
pub fn deltas_csv(est: &RateEstimate) -> String {
    let mut s = String::from("i,y,x,delta_2_1,delta_3_2\n");
    let w = est.latent_width.max(1);
    for i in 0..est.position_bits.len() {
        let delta = |a: usize, b: usize| match (est.stage_bits.get(a), est.stage_bits.get(b)) {
            (Some(x), Some(y)) => format!("{:.6}", y[i] - x[i]),
            _ => String::new(),
        };
        let _ = writeln!(s, "{i},{},{},{},{}", i / w, i % w, delta(0, 1), delta(1, 2));
    }
    s
}

/// Writes `stage{1,2,3}_bits.pgm`, `similarity.pgm`, `matches.csv` and
/// `deltas.csv` into `dir`. All bit maps share one scale.
pub fn write_rate_report(est: &RateEstimate, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| GricError::io(format!("creating {}", dir.display()), e))?;
    let (w, h) = (est.latent_width, est.latent_height);
    let max = est.stage_bits.iter().flatten().fold(0.0f64, |a, b| a.max(*b));
    let mut files: Vec<(PathBuf, Vec<u8>)> = est
        .stage_bits
        .iter()
        .enumerate()
        .map(|(s, bits)| (dir.join(format!("stage{}_bits.pgm", s + 1)), encode_pgm(bits, w, h, max)))
        .collect();
    let sim: Vec<f64> = est
        .trace
        .positions
        .iter()
        .map(|p| p.reference.map_or(0.0, |m| m.similarity as f64))
        .collect();
    files.push((dir.join("similarity.pgm"), encode_pgm(&sim, w, h, 1.0)));
    files.push((dir.join("matches.csv"), matches_csv(est).into_bytes()));
    files.push((dir.join("deltas.csv"), deltas_csv(est).into_bytes()));
    for (path, bytes) in &files {
        std::fs::write(path, bytes).map_err(|e| GricError::io(format!("writing {}", path.display()), e))?;
    }
    Ok(files.into_iter().map(|f| f.0).collect())
}
