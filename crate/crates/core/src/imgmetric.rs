//! Image-space appearance comparison.
//!
//! The optimizer only ever sees [`residual_vector`] (an L2 objective on linear
//! HDR values). SSIM is reported alongside as a diagnostic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{check_same_size, RenderedImage, ScalarImage};

pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_RADIUS: usize = 5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissimilarityReport {
    pub l2: f64,
    pub mean_ssim: f64,
    pub ssim_map: ScalarImage,
    pub mean_dissimilarity: f64,
}

fn check(a: &RenderedImage, b: &RenderedImage) -> Result<()> {
    check_same_size(a.width, a.height, b.width, b.height)
}

/// Root mean square of the per-channel differences.
pub fn l2_distance(a: &RenderedImage, b: &RenderedImage) -> Result<f64> {
    check(a, b)?;
    if a.pass != b.pass {
        return Err(Error::Dimension(format!(
            "comparing a {} render with a {} render",
            a.pass.name(),
            b.pass.name()
        )));
    }
    Ok(rms_difference(a, b))
}

fn rms_difference(a: &RenderedImage, b: &RenderedImage) -> f64 {
    let n = 3 * a.pixels.len();
    if n == 0 {
        return 0.0;
    }
    let sum: f64 = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .flat_map(|(p, q)| (0..3).map(move |c| (p[c] - q[c]) * (p[c] - q[c])))
        .sum();
    (sum / n as f64).sqrt()
}

/// Flattened `a - b`, three entries per pixel.
pub fn residual_vector(a: &RenderedImage, b: &RenderedImage) -> Result<Vec<f64>> {
    check(a, b)?;
    let mut out = Vec::with_capacity(3 * a.pixels.len());
    residual_into(a, b, &mut out);
    Ok(out)
}

pub(crate) fn residual_into(a: &RenderedImage, b: &RenderedImage, out: &mut Vec<f64>) {
    out.extend(
        a.pixels
            .iter()
            .zip(&b.pixels)
            .flat_map(|(p, q)| [p[0] - q[0], p[1] - q[1], p[2] - q[2]]),
    );
}

/// Luminance SSIM with the dynamic range taken from `a` (falling back to `b`
/// when `a` is black).
pub fn ssim(a: &RenderedImage, b: &RenderedImage) -> Result<DissimilarityReport> {
    let la = a.luminance();
    let lb = b.luminance();
    let mut range = la.data.iter().copied().fold(0.0, f64::max);
    if range <= 0.0 {
        range = lb.data.iter().copied().fold(0.0, f64::max);
    }
    if range <= 0.0 {
        range = 1.0;
    }
    ssim_with_range(a, b, range)
}

/// SSIM with an explicit dynamic range `L` (stabilizers `(K1 L)^2`, `(K2 L)^2`).
pub fn ssim_with_range(a: &RenderedImage, b: &RenderedImage, range: f64) -> Result<DissimilarityReport> {
    check(a, b)?;
    let map = ssim_map(&a.luminance(), &b.luminance(), range);
    let mean_ssim = map.mean();
    Ok(DissimilarityReport {
        l2: rms_difference(a, b),
        mean_ssim,
        ssim_map: map,
        mean_dissimilarity: 1.0 - mean_ssim,
    })
}

fn gaussian_kernel() -> [f64; 2 * SSIM_RADIUS + 1] {
    let mut k = [0.0; 2 * SSIM_RADIUS + 1];
    for (i, w) in k.iter_mut().enumerate() {
        let x = i as f64 - SSIM_RADIUS as f64;
        *w = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|w| w / s)
}

/// Half-sample symmetric extension (`d c b a | a b c d | d c b a`).
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

fn blur(src: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let r = (k.len() / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, kw) in k.iter().enumerate() {
                let xx = reflect(x as isize + j as isize - r, w);
                acc += kw * src[y * w + xx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, kw) in k.iter().enumerate() {
                let yy = reflect(y as isize + j as isize - r, h);
                acc += kw * tmp[yy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Full-resolution SSIM map: 11x11 Gaussian window (sigma 1.5), reflected
/// borders, population (not sample) covariances.
pub fn ssim_map(x: &ScalarImage, y: &ScalarImage, range: f64) -> ScalarImage {
    let (w, h) = (x.width, x.height);
    let k = gaussian_kernel();
    let c1 = (SSIM_K1 * range).powi(2);
    let c2 = (SSIM_K2 * range).powi(2);
    let xx: Vec<f64> = x.data.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.data.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.data.iter().zip(&y.data).map(|(a, b)| a * b).collect();
    let mx = blur(&x.data, w, h, &k);
    let my = blur(&y.data, w, h, &k);
    let mxx = blur(&xx, w, h, &k);
    let myy = blur(&yy, w, h, &k);
    let mxy = blur(&xy, w, h, &k);
    let data = (0..w * h)
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = mxx[i] - ux * ux;
            let vy = myy[i] - uy * uy;
            let cxy = mxy[i] - ux * uy;
            let num = (2.0 * ux * uy + c1) * (2.0 * cxy + c2);
            let den = (ux * ux + uy * uy + c1) * (vx + vy + c2);
            if den == 0.0 {
                1.0
            } else {
                (num / den).clamp(-1.0, 1.0)
            }
        })
        .collect();
    ScalarImage {
        width: w,
        height: h,
        data,
    }
}
