//! Images, affine transforms, PSNR, and binary PPM/PGM codecs.
//!
//! Pixels are `f64`, stored row-major with interleaved channels:
//! `pixels[(r * width + c) * channels + q]`. An [`Image`] keeps every value
//! in `[0, 1]`; a [`FieldImage`] is the same shape without the range bound,
//! used for raw gradient inversions before clamping.

mod pnm;
mod transform;

pub use pnm::{encode, parse_pnm, quantize, read_image, write_field_image, write_image};
pub use transform::{apply_transform, flip_h, flip_v, rotate, shear, TransformSpec};

use crate::error::{Error, Result};

/// PSNR value reported when the MSE falls below [`PSNR_MSE_FLOOR`].
pub const PSNR_CAP_DB: f64 = 300.0;
/// MSE below this is treated as an exact match.
pub const PSNR_MSE_FLOOR: f64 = 1e-30;

/// Raster image with all pixels in `[0, 1]`, 1 (gray) or 3 (RGB) channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<f64>,
}

/// Image-shaped field with finite but unbounded values.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldImage {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<f64>,
}

fn check_shape(width: usize, height: usize, channels: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::Config(format!(
            "image dimensions must be positive, got {width}x{height}"
        )));
    }
    if channels != 1 && channels != 3 {
        return Err(Error::Config(format!(
            "channel count must be 1 or 3, got {channels}"
        )));
    }
    if len != width * height * channels {
        return Err(Error::Dimension {
            context: "image pixel buffer",
            expected: format!("{} values", width * height * channels),
            got: format!("{len} values"),
        });
    }
    Ok(())
}

impl Image {
    /// Build from a row-major, channel-interleaved buffer of `[0, 1]` values.
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<f64>) -> Result<Self> {
        check_shape(width, height, channels, pixels.len())?;
        if !pixels.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { tensor: "image pixels" });
        }
        if pixels.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Config(
                "image pixels must lie in [0, 1]".to_string(),
            ));
        }
        Ok(Image {
            width,
            height,
            channels,
            pixels,
        })
    }

    /// Constant image of the given value.
    pub fn constant(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Image::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// (width, height, channels).
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.pixels[(row * self.width + col) * self.channels + channel]
    }

    /// Mean over all pixels and channels, accumulated left to right.
    pub fn mean(&self) -> f64 {
        let mut acc = 0.0;
        for &v in &self.pixels {
            acc += v;
        }
        acc / self.pixels.len() as f64
    }
}

impl FieldImage {
    /// Build from a row-major, channel-interleaved buffer of finite values.
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<f64>) -> Result<Self> {
        check_shape(width, height, channels, pixels.len())?;
        if !pixels.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { tensor: "field pixels" });
        }
        Ok(FieldImage {
            width,
            height,
            channels,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    /// Copy with every pixel clamped to `[0, 1]`.
    pub fn clamped(&self) -> Image {
        let pixels = self.pixels.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Image {
            width: self.width,
            height: self.height,
            channels: self.channels,
            pixels,
        }
    }
}

impl From<Image> for FieldImage {
    fn from(img: Image) -> Self {
        FieldImage {
            width: img.width,
            height: img.height,
            channels: img.channels,
            pixels: img.pixels,
        }
    }
}

/// Pixel access shared by [`Image`] and [`FieldImage`].
pub trait Pixels {
    fn shape(&self) -> (usize, usize, usize);
    fn pixels(&self) -> &[f64];
}

impl Pixels for Image {
    fn shape(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    fn pixels(&self) -> &[f64] {
        &self.pixels
    }
}

impl Pixels for FieldImage {
    fn shape(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    fn pixels(&self) -> &[f64] {
        &self.pixels
    }
}

/// Mean squared error between two equally shaped rasters.
pub fn mse(a: &impl Pixels, b: &impl Pixels) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension {
            context: "mse",
            expected: format!("{:?}", a.shape()),
            got: format!("{:?}", b.shape()),
        });
    }
    let pa = a.pixels();
    let pb = b.pixels();
    let mut acc = 0.0;
    for (&x, &y) in pa.iter().zip(pb) {
        let d = x - y;
        acc += d * d;
    }
    Ok(acc / pa.len() as f64)
}

/// Peak signal-to-noise ratio in dB against peak 1.0, capped at 300.
pub fn psnr(a: &impl Pixels, b: &impl Pixels) -> Result<f64> {
    let err = mse(a, b)?;
    if err < PSNR_MSE_FLOOR {
        Ok(PSNR_CAP_DB)
    } else {
        Ok(10.0 * (1.0 / err).log10())
    }
}
