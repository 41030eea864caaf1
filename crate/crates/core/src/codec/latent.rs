use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Integer latents in channel-major `(C, H, W)` layout.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatentGrid {
    channels: usize,
    height: usize,
    width: usize,
    values: Vec<i32>,
}

impl LatentGrid {
    pub fn new(channels: usize, height: usize, width: usize, values: Vec<i32>) -> Result<Self> {
        if values.len() != channels * height * width {
            return Err(Error::config(
                "latent_grid",
                alloc::format!(
                    "{} values for shape ({channels}, {height}, {width})",
                    values.len()
                ),
            ));
        }
        Ok(Self {
            channels,
            height,
            width,
            values,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            values: alloc::vec![0; channels * height * width],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    pub fn values(&self) -> &[i32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [i32] {
        &mut self.values
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> i32 {
        self.values[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: i32) {
        self.values[(c * self.height + y) * self.width + x] = v;
    }

    /// All channels at raster position `p`.
    pub fn position(&self, p: usize) -> Vec<i32> {
        let plane = self.height * self.width;
        (0..self.channels).map(|c| self.values[c * plane + p]).collect()
    }

    pub fn set_position(&mut self, p: usize, symbols: &[i32]) {
        let plane = self.height * self.width;
        for (c, s) in symbols.iter().enumerate() {
            self.values[c * plane + p] = *s;
        }
    }

    /// Number of values outside `[-support, support]`.
    pub fn escape_count(&self, support: u32) -> usize {
        let l = support as i64;
        self.values.iter().filter(|v| (**v as i64).abs() > l).count()
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            &[self.channels, self.height, self.width],
            self.values.iter().map(|v| *v as f32).collect(),
        )
        .expect("grid shape is consistent")
    }
}

/// Rounds half away from zero. Values are saturated to the 16-bit range the
/// escape code can carry; non-finite inputs become 0.
pub fn quantize_value(v: f32) -> i32 {
    if !v.is_finite() {
        return 0;
    }
    libm::roundf(v).clamp(i16::MIN as f32, i16::MAX as f32) as i32
}

pub fn quantize(y: &Tensor) -> Result<LatentGrid> {
    let (c, h, w) = y.dims3()?;
    LatentGrid::new(c, h, w, y.data().iter().map(|v| quantize_value(*v)).collect())
}
