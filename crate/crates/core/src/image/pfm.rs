//! Portable float map. Written little-endian (negative scale), bottom row first.

use std::fs;
use std::path::Path;

use crate::brdf::Pass;
use crate::error::{Error, Result};

use super::{RenderedImage, ScalarImage};

/// Decoded PFM contents: 1 or 3 channels, rows stored top-to-bottom.
#[derive(Debug, Clone, PartialEq)]
pub struct PfmData {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl PfmData {
    pub fn into_rgb(self, pass: Pass) -> Result<RenderedImage> {
        let px = match self.channels {
            3 => self
                .data
                .chunks_exact(3)
                .map(|c| [c[0] as f64, c[1] as f64, c[2] as f64])
                .collect(),
            _ => self.data.iter().map(|&v| [v as f64; 3]).collect(),
        };
        RenderedImage::from_pixels(self.width, self.height, px, pass)
    }

    pub fn into_scalar(self) -> ScalarImage {
        let data = match self.channels {
            3 => self.data.chunks_exact(3).map(|c| c[0] as f64).collect(),
            _ => self.data.iter().map(|&v| v as f64).collect(),
        };
        ScalarImage {
            width: self.width,
            height: self.height,
            data,
        }
    }
}

pub fn encode(width: usize, height: usize, channels: usize, top_down: &[f32]) -> Vec<u8> {
    let tag = if channels == 3 { "PF" } else { "Pf" };
    let mut out = format!("{tag}\n{width} {height}\n-1.0\n").into_bytes();
    out.reserve(top_down.len() * 4);
    let row = width * channels;
    for y in (0..height).rev() {
        for v in &top_down[y * row..(y + 1) * row] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<PfmData> {
    let mut pos = 0;
    let mut token = || -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PFM header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let channels = match token()?.as_str() {
        "PF" => 3,
        "Pf" => 1,
        t => return Err(Error::Format(format!("not a PFM file (magic '{t}')"))),
    };
    let parse = |t: String| -> Result<f64> {
        t.parse()
            .map_err(|_| Error::Format(format!("bad PFM header field '{t}'")))
    };
    let width = parse(token()?)? as usize;
    let height = parse(token()?)? as usize;
    let scale = parse(token()?)?;
    // Exactly one whitespace byte separates the header from the raster.
    let start = pos + 1;
    let count = width * height * channels;
    if bytes.len() < start + count * 4 {
        return Err(Error::Format("truncated PFM raster".into()));
    }
    let little = scale < 0.0;
    let mut data = vec![0f32; count];
    let row = width * channels;
    for (i, chunk) in bytes[start..start + count * 4].chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        };
        let (file_row, col) = (i / row, i % row);
        data[(height - 1 - file_row) * row + col] = v;
    }
    Ok(PfmData {
        width,
        height,
        channels,
        data,
    })
}

pub fn write_pfm(path: impl AsRef<Path>, img: &RenderedImage) -> Result<()> {
    let flat: Vec<f32> = img
        .pixels
        .iter()
        .flat_map(|p| p.iter().map(|&v| v as f32))
        .collect();
    let path = path.as_ref();
    fs::write(path, encode(img.width, img.height, 3, &flat)).map_err(|e| Error::io(path, e))
}

pub fn write_pfm_gray(path: impl AsRef<Path>, img: &ScalarImage) -> Result<()> {
    let flat: Vec<f32> = img.data.iter().map(|&v| v as f32).collect();
    let path = path.as_ref();
    fs::write(path, encode(img.width, img.height, 1, &flat)).map_err(|e| Error::io(path, e))
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<PfmData> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
