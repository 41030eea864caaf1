//! 8-bit RGB images: binary PPM always, PNG with the `png` feature.

use std::path::Path;

use gric_core::Tensor;

use crate::error::{GricError, Result};

/// Interleaved 8-bit RGB.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl RgbImage {
    /// `(3, H, W)` tensor with values `v / 255`.
    pub fn to_tensor(&self) -> Tensor {
        let plane = self.width * self.height;
        Tensor::from_fn(&[3, self.height, self.width], |i| {
            self.pixels[(i % plane) * 3 + i / plane] as f32 / 255.0
        })
    }

    /// Rounds `[0, 1]` values to the 8-bit grid.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let (c, h, w) = t.dims3()?;
        if c != 3 {
            return Err(GricError::Input(format!("expected 3 channels, got {c}")));
        }
        let plane = h * w;
        let mut pixels = vec![0; 3 * plane];
        for (i, v) in t.data().iter().enumerate() {
            pixels[(i % plane) * 3 + i / plane] = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        }
        Ok(Self {
            width: w,
            height: h,
            pixels,
        })
    }
}

fn input(msg: impl Into<String>) -> GricError {
    GricError::Input(msg.into())
}

pub fn decode_ppm(bytes: &[u8]) -> Result<RgbImage> {
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(input("PPM header ends early"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P6" {
        return Err(input("not a binary PPM (P6) file"));
    }
    let mut number = || -> Result<usize> { token()?.parse().map_err(|_| input("bad PPM header number")) };
    let (width, height, maxval) = (number()?, number()?, number()?);
    if maxval != 255 {
        return Err(input(format!("PPM maxval {maxval} is not supported (need 255)")));
    }
    if width == 0 || height == 0 {
        return Err(input("PPM has zero size"));
    }
    let start = pos + 1;
    let len = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| input("PPM size overflows"))?;
    let pixels = bytes
        .get(start..start + len)
        .ok_or_else(|| input("PPM pixel data is truncated"))?
        .to_vec();
    Ok(RgbImage {
        width,
        height,
        pixels,
    })
}

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

#[cfg(feature = "png")]
pub fn decode_png(bytes: &[u8]) -> Result<RgbImage> {
    let err = |e: png::DecodingError| input(format!("PNG: {e}"));
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder.read_info().map_err(err)?;
    let size = reader.output_buffer_size().ok_or_else(|| input("PNG too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(err)?;
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => return Err(input("PNG palette was not expanded")),
    };
    let mut pixels = Vec::with_capacity(w * h * 3);
    for px in buf[..info.buffer_size()].chunks_exact(channels) {
        if channels < 3 {
            pixels.extend_from_slice(&[px[0]; 3]);
        } else {
            pixels.extend_from_slice(&px[..3]);
        }
    }
    Ok(RgbImage {
        width: w,
        height: h,
        pixels,
    })
}

#[cfg(feature = "png")]
pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let err = |e: png::EncodingError| input(format!("PNG: {e}"));
    let mut writer = enc.write_header().map_err(err)?;
    writer.write_image_data(&img.pixels).map_err(err)?;
    writer.finish().map_err(err)?;
    Ok(out)
}

fn is_png(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Reads by content: PNG signature or P6 header.
pub fn read_image(path: &Path) -> Result<RgbImage> {
    let bytes = std::fs::read(path).map_err(|e| GricError::io(format!("reading {}", path.display()), e))?;
    if bytes.starts_with(b"\x89PNG") {
        #[cfg(feature = "png")]
        return decode_png(&bytes);
        #[cfg(not(feature = "png"))]
        return Err(input("PNG support is not compiled in"));
    }
    decode_ppm(&bytes)
}

/// Writes PNG for a `.png` extension, PPM otherwise.
pub fn write_image(path: &Path, img: &RgbImage) -> Result<()> {
    let bytes = if is_png(path) {
        #[cfg(feature = "png")]
        {
            encode_png(img)?
        }
        #[cfg(not(feature = "png"))]
        return Err(input("PNG support is not compiled in"));
    } else {
        encode_ppm(img)
    };
    std::fs::write(path, bytes).map_err(|e| GricError::io(format!("writing {}", path.display()), e))
}
