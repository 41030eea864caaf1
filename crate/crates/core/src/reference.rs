//! Global reference search over already-decoded latents.
//!
//! Every latent position is described by its masked `k x k` neighborhood:
//! the taps strictly before the center in raster order (for `k = 3`, the
//! three positions above and the one to the left). The target position is
//! compared by cosine similarity against the masked neighborhoods of all
//! earlier positions, the best one is selected, and the causally masked
//! window around that source (center included) is handed to the reference
//! model. Its output is scaled by the similarity `S` and the confidence `U`.
//!
//! The neighborhood of position `j` only reads positions before `j`, so the
//! decoder can compute exactly the rows the encoder computed from the full
//! grid.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Result;
use crate::nn::{unfold_row, MaskKind};
use crate::tensor::{chw_to_hwc, Tensor};

/// Outcome of the search for one target position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceMatch {
    pub target: usize,
    /// Raster index of the most similar earlier position, if any scored
    /// above zero.
    pub source: Option<usize>,
    /// Cosine similarity of the match, 0 without a match.
    pub similarity: f32,
    /// Confidence of the matched latent, 0 without a match.
    pub confidence: f32,
}

impl ReferenceMatch {
    pub fn none(target: usize) -> Self {
        Self {
            target,
            source: None,
            similarity: 0.0,
            confidence: 0.0,
        }
    }
}

/// Masked neighborhoods of every position, `(H*W, k*k*C)`, laid out like
/// [`crate::nn::unfold`].
pub fn masked_patches(latents: &Tensor, k: usize) -> Result<Tensor> {
    let (c, h, w) = latents.dims3()?;
    let hwc = chw_to_hwc(latents.data(), c, h, w);
    let cols = k * k * c;
    let mut out = vec![0.0; h * w * cols];
    for p in 0..h * w {
        unfold_row(&hwc, c, h, w, p, k, MaskKind::CausalExclusive, &mut out[p * cols..(p + 1) * cols]);
    }
    Tensor::new(&[h * w, cols], out)
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum()
}

/// Cosine similarities `r[i][j]` of row `i` against rows `j < i`. Pairs
/// involving a zero row score 0.
pub fn similarity_row(patches: &Tensor, i: usize) -> Vec<f64> {
    let cols = patches.shape()[1];
    let row = |j: usize| &patches.data()[j * cols..(j + 1) * cols];
    let qi = row(i);
    let ni = libm::sqrt(dot(qi, qi));
    (0..i)
        .map(|j| {
            let qj = row(j);
            cosine(qi, ni, qj, libm::sqrt(dot(qj, qj)))
        })
        .collect()
}

fn cosine(a: &[f32], norm_a: f64, b: &[f32], norm_b: f64) -> f64 {
    if norm_a == 0.0 || norm_b == 0.0 {
        0.0
    } else {
        (dot(a, b) / (norm_a * norm_b)).clamp(-1.0, 1.0)
    }
}

/// Scores closer than this count as tied, so proportional patches tie
/// regardless of rounding in the cosine.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Picks the highest score; ties go to the earliest position. Without a
/// strictly positive score there is no match.
pub fn best_match(scores: &[f64], i: usize) -> ReferenceMatch {
    let mut best: Option<(usize, f64)> = None;
    for (j, &s) in scores.iter().enumerate().take(i) {
        if best.is_none_or(|(_, b)| s > b + TIE_TOLERANCE) {
            best = Some((j, s));
        }
    }
    match best {
        Some((j, s)) if s > 0.0 => ReferenceMatch {
            target: i,
            source: Some(j),
            similarity: s as f32,
            confidence: 0.0,
        },
        _ => ReferenceMatch::none(i),
    }
}

/// The `k x k` window around `source` with raster-later taps zeroed and the
/// center kept, as a `(C, k, k)` tensor. All zeros without a source.
pub fn gather_relevant(latents: &Tensor, source: Option<usize>, k: usize) -> Result<Tensor> {
    let (c, h, w) = latents.dims3()?;
    let Some(j) = source else {
        return Ok(Tensor::zeros(&[c, k, k]));
    };
    let hwc = chw_to_hwc(latents.data(), c, h, w);
    let mut row = vec![0.0; k * k * c];
    unfold_row(&hwc, c, h, w, j, k, MaskKind::CausalInclusive, &mut row);
    Tensor::from_hwc(&row, c, k, k)
}

/// Scales reference features by `S * U`; negative similarities count as 0.
pub fn gate(features: &[f32], similarity: f32, confidence: f32) -> Vec<f32> {
    let scale = similarity.clamp(0.0, 1.0) * confidence.clamp(0.0, 1.0);
    features.iter().map(|f| f * scale).collect()
}

/// Incrementally built masked-patch rows with cached norms, for the raster
/// decode loop.
#[derive(Clone, Debug)]
pub(crate) struct PatchIndex {
    cols: usize,
    rows: Vec<f32>,
    norms: Vec<f64>,
}

impl PatchIndex {
    pub(crate) fn new(cols: usize) -> Self {
        Self {
            cols,
            rows: Vec::new(),
            norms: Vec::new(),
        }
    }

    #[cfg(test)]
    pub(crate) fn from_matrix(patches: &Tensor) -> Self {
        let cols = patches.shape()[1];
        let mut index = Self::new(cols);
        for row in patches.data().chunks(cols) {
            index.push(row);
        }
        index
    }

    pub(crate) fn len(&self) -> usize {
        self.norms.len()
    }

    /// Computes and appends the row for `position` from a position-major grid.
    pub(crate) fn push_from_grid(&mut self, hwc: &[f32], c: usize, h: usize, w: usize, k: usize) {
        let position = self.len();
        let start = self.rows.len();
        self.rows.resize(start + self.cols, 0.0);
        unfold_row(hwc, c, h, w, position, k, MaskKind::CausalExclusive, &mut self.rows[start..]);
        let r = &self.rows[start..];
        self.norms.push(libm::sqrt(dot(r, r)));
    }

    #[cfg(test)]
    fn push(&mut self, row: &[f32]) {
        self.rows.extend_from_slice(row);
        self.norms.push(libm::sqrt(dot(row, row)));
    }

    fn row(&self, j: usize) -> &[f32] {
        &self.rows[j * self.cols..(j + 1) * self.cols]
    }

    /// Same values as [`similarity_row`] on the full matrix.
    pub(crate) fn similarity_row(&self, i: usize) -> Vec<f64> {
        let (qi, ni) = (self.row(i), self.norms[i]);
        (0..i)
            .map(|j| cosine(qi, ni, self.row(j), self.norms[j]))
            .collect()
    }
}
