//! Linear HDR rasters and their file formats.

pub mod pfm;
mod png;

use serde::{Deserialize, Serialize};

use crate::brdf::Pass;
use crate::error::{Error, Result};
use crate::math::{luminance, Rgb};

pub use self::png::{read_png, write_png16, write_png_false_color, write_png_srgb, Transfer};
pub use pfm::{read_pfm, write_pfm, write_pfm_gray, PfmData};

/// Row-major linear RGB image tagged with the pass it was rendered with.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Rgb>,
    pub pass: Pass,
}

impl RenderedImage {
    pub fn black(width: usize, height: usize, pass: Pass) -> Self {
        RenderedImage {
            width,
            height,
            pixels: vec![[0.0; 3]; width * height],
            pass,
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<Rgb>, pass: Pass) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(RenderedImage {
            width,
            height,
            pixels,
            pass,
        })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    pub fn luminance(&self) -> ScalarImage {
        ScalarImage {
            width: self.width,
            height: self.height,
            data: self.pixels.iter().map(|&p| luminance(p)).collect(),
        }
    }

    pub fn max_value(&self) -> f64 {
        self.pixels
            .iter()
            .flat_map(|p| p.iter().copied())
            .fold(0.0, f64::max)
    }

    pub fn is_valid(&self) -> bool {
        self.pixels
            .iter()
            .flat_map(|p| p.iter())
            .all(|v| v.is_finite() && *v >= 0.0)
    }

    /// Pixelwise sum; passes must agree or the result is tagged `Full`.
    pub fn add(&self, other: &RenderedImage) -> Result<RenderedImage> {
        check_same_size(self.width, self.height, other.width, other.height)?;
        let pixels = self
            .pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| [a[0] + b[0], a[1] + b[1], a[2] + b[2]])
            .collect();
        Ok(RenderedImage {
            width: self.width,
            height: self.height,
            pixels,
            pass: Pass::Full,
        })
    }

    /// Rotates by 90 degrees about the image center (square images only).
    pub fn rotated_90(&self) -> RenderedImage {
        assert_eq!(self.width, self.height, "rotation needs a square image");
        let n = self.width;
        let mut out = RenderedImage::black(n, n, self.pass);
        for y in 0..n {
            for x in 0..n {
                out.pixels[x * n + (n - 1 - y)] = self.pixels[y * n + x];
            }
        }
        out
    }
}

/// Single-channel image (luminance, SSIM map, roughness texture).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl ScalarImage {
    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

pub(crate) fn check_same_size(w0: usize, h0: usize, w1: usize, h1: usize) -> Result<()> {
    if w0 != w1 || h0 != h1 {
        return Err(Error::Dimension(format!("{w0}x{h0} vs {w1}x{h1}")));
    }
    Ok(())
}

/// sRGB opto-electronic transfer of a linear value in [0, 1].
pub fn linear_to_srgb(v: f64) -> f64 {
    let v = v.clamp(0.0, 1.0);
    if v <= 0.003_130_8 {
        12.92 * v
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

pub fn srgb_to_linear(v: f64) -> f64 {
    if v <= 0.040_45 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}
