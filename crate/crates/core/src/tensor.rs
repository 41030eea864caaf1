//! Dense row-major `f32` tensors.
//!
//! Three-dimensional tensors are `(channels, height, width)`, channel-major.
//! Two-dimensional tensors are `(rows, cols)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f32>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::config(
                "tensor",
                alloc::format!(
                    "shape {:?} needs {} elements, got {}",
                    shape,
                    expected,
                    data.len()
                ),
            ));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: f32) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f32) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(channels, height, width)` of a 3-D tensor.
    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::config(
                "tensor",
                alloc::format!("expected a 3-D tensor, got shape {:?}", self.shape),
            )),
        }
    }

    pub fn get3(&self, c: usize, y: usize, x: usize) -> f32 {
        let (_, h, w) = (self.shape[0], self.shape[1], self.shape[2]);
        self.data[(c * h + y) * w + x]
    }

    pub fn set3(&mut self, c: usize, y: usize, x: usize, value: f32) {
        let (h, w) = (self.shape[1], self.shape[2]);
        self.data[(c * h + y) * w + x] = value;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Copies `(C, H, W)` data into position-major `(H, W, C)` order.
    pub fn to_hwc(&self) -> Result<Vec<f32>> {
        let (c, h, w) = self.dims3()?;
        Ok(chw_to_hwc(&self.data, c, h, w))
    }

    /// Builds a `(C, H, W)` tensor from position-major data.
    pub fn from_hwc(hwc: &[f32], c: usize, h: usize, w: usize) -> Result<Self> {
        if hwc.len() != c * h * w {
            return Err(Error::config("tensor", "HWC buffer length mismatch"));
        }
        let mut data = vec![0.0; hwc.len()];
        for p in 0..h * w {
            for ch in 0..c {
                data[ch * h * w + p] = hwc[p * c + ch];
            }
        }
        Ok(Self {
            shape: vec![c, h, w],
            data,
        })
    }

    /// Top-left `(C, height, width)` crop of a 3-D tensor.
    pub fn crop(&self, height: usize, width: usize) -> Result<Self> {
        let (c, h, w) = self.dims3()?;
        if height > h || width > w {
            return Err(Error::config("crop", "crop larger than tensor"));
        }
        let mut out = Vec::with_capacity(c * height * width);
        for ch in 0..c {
            for y in 0..height {
                let row = (ch * h + y) * w;
                out.extend_from_slice(&self.data[row..row + width]);
            }
        }
        Ok(Self {
            shape: vec![c, height, width],
            data: out,
        })
    }

    /// Extends a 3-D tensor to `(C, height, width)` by repeating the last row
    /// and column.
    pub fn pad_replicate(&self, height: usize, width: usize) -> Result<Self> {
        let (c, h, w) = self.dims3()?;
        if height < h || width < w || h == 0 || w == 0 {
            return Err(Error::config("pad", "padding target smaller than tensor"));
        }
        let mut out = Vec::with_capacity(c * height * width);
        for ch in 0..c {
            for y in 0..height {
                let sy = y.min(h - 1);
                for x in 0..width {
                    out.push(self.data[(ch * h + sy) * w + x.min(w - 1)]);
                }
            }
        }
        Ok(Self {
            shape: vec![c, height, width],
            data: out,
        })
    }

    /// Channel-wise concatenation of 3-D tensors with equal spatial size.
    pub fn concat_channels(parts: &[&Tensor]) -> Result<Self> {
        let (_, h, w) = parts
            .first()
            .ok_or(Error::Contract("concat of zero tensors"))?
            .dims3()?;
        let mut data = Vec::new();
        let mut channels = 0;
        for part in parts {
            let (c, ph, pw) = part.dims3()?;
            if (ph, pw) != (h, w) {
                return Err(Error::config("concat", "spatial size mismatch"));
            }
            channels += c;
            data.extend_from_slice(&part.data);
        }
        Ok(Self {
            shape: vec![channels, h, w],
            data,
        })
    }
}

pub(crate) fn chw_to_hwc(data: &[f32], c: usize, h: usize, w: usize) -> Vec<f32> {
    let mut out = vec![0.0; data.len()];
    for ch in 0..c {
        for p in 0..h * w {
            out[p * c + ch] = data[ch * h * w + p];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_must_match_shape() {
        assert!(Tensor::new(&[2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::new(&[2, 2], vec![1.0; 4]).is_ok());
    }

    #[test]
    fn hwc_round_trip() {
        let t = Tensor::from_fn(&[3, 2, 4], |i| i as f32);
        let hwc = t.to_hwc().unwrap();
        assert_eq!(hwc[0..3], [0.0, 8.0, 16.0]);
        assert_eq!(Tensor::from_hwc(&hwc, 3, 2, 4).unwrap(), t);
    }

    #[test]
    fn replicate_padding_repeats_edges() {
        let t = Tensor::new(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let p = t.pad_replicate(3, 3).unwrap();
        assert_eq!(p.data(), &[1.0, 2.0, 2.0, 3.0, 4.0, 4.0, 3.0, 4.0, 4.0]);
        assert_eq!(p.crop(2, 2).unwrap(), t);
    }
}
