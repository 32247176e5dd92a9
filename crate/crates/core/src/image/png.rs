use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{linear_to_srgb, srgb_to_linear, PfmData, RenderedImage, ScalarImage};

/// Transfer function of stored integer texel values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transfer {
    #[default]
    Srgb,
    Linear,
}

fn format_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Format(format!("{}: {e}", path.display()))
}

fn write_rgb8(path: &Path, width: usize, height: usize, data: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = ::png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(::png::ColorType::Rgb);
    enc.set_depth(::png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| format_err(path, e))?;
    writer
        .write_image_data(data)
        .map_err(|e| format_err(path, e))?;
    writer.finish().map_err(|e| format_err(path, e))
}

/// 8-bit sRGB preview after clamping to [0, 1].
pub fn write_png_srgb(path: impl AsRef<Path>, img: &RenderedImage) -> Result<()> {
    let data: Vec<u8> = img
        .pixels
        .iter()
        .flat_map(|p| p.iter().map(|&v| (linear_to_srgb(v) * 255.0).round() as u8))
        .collect();
    write_rgb8(path.as_ref(), img.width, img.height, &data)
}

/// False-color rendering of a map with values in `[lo, hi]`: blue at `hi`
/// through white to red at `lo` (for SSIM maps, red marks dissimilar pixels).
pub fn write_png_false_color(
    path: impl AsRef<Path>,
    img: &ScalarImage,
    lo: f64,
    hi: f64,
) -> Result<()> {
    let data: Vec<u8> = img
        .data
        .iter()
        .flat_map(|&v| {
            let t = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
            let (r, g, b) = if t < 0.5 {
                (1.0, 2.0 * t, 2.0 * t)
            } else {
                (2.0 * (1.0 - t), 2.0 * (1.0 - t), 1.0)
            };
            [r, g, b].map(|c: f64| (c * 255.0).round() as u8)
        })
        .collect();
    write_rgb8(path.as_ref(), img.width, img.height, &data)
}

/// Reads an 8- or 16-bit PNG into linear floats. Gray images come back with
/// one channel, everything else with three (alpha is dropped).
pub fn read_png(path: impl AsRef<Path>, transfer: Transfer) -> Result<PfmData> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dec = ::png::Decoder::new(BufReader::new(file));
    dec.set_transformations(::png::Transformations::EXPAND);
    let mut reader = dec.read_info().map_err(|e| format_err(path, e))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| format_err(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| format_err(path, e))?;
    let (width, height) = (info.width as usize, info.height as usize);
    let samples: Vec<f64> = match info.bit_depth {
        ::png::BitDepth::Sixteen => buf[..info.buffer_size()]
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / 65535.0)
            .collect(),
        _ => buf[..info.buffer_size()]
            .iter()
            .map(|&b| b as f64 / 255.0)
            .collect(),
    };
    let (src_channels, out_channels) = match info.color_type {
        ::png::ColorType::Grayscale => (1, 1),
        ::png::ColorType::GrayscaleAlpha => (2, 1),
        ::png::ColorType::Rgb => (3, 3),
        ::png::ColorType::Rgba => (4, 3),
        ::png::ColorType::Indexed => return Err(format_err(path, "unexpanded palette")),
    };
    let decode = |v: f64| -> f32 {
        match transfer {
            Transfer::Srgb => srgb_to_linear(v) as f32,
            Transfer::Linear => v as f32,
        }
    };
    let mut data = Vec::with_capacity(width * height * out_channels);
    for px in samples.chunks_exact(src_channels).take(width * height) {
        for &v in &px[..out_channels] {
            data.push(decode(v));
        }
    }
    Ok(PfmData {
        width,
        height,
        channels: out_channels,
        data,
    })
}

/// Writes linear values quantized to 16 bits with the given transfer.
pub fn write_png16(
    path: impl AsRef<Path>,
    width: usize,
    height: usize,
    channels: usize,
    data: &[f32],
    transfer: Transfer,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = ::png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(if channels == 1 {
        ::png::ColorType::Grayscale
    } else {
        ::png::ColorType::Rgb
    });
    enc.set_depth(::png::BitDepth::Sixteen);
    let mut writer = enc.write_header().map_err(|e| format_err(path, e))?;
    let bytes: Vec<u8> = data
        .iter()
        .flat_map(|&v| {
            let v = v as f64;
            let e = match transfer {
                Transfer::Srgb => linear_to_srgb(v),
                Transfer::Linear => v.clamp(0.0, 1.0),
            };
            ((e * 65535.0).round() as u16).to_be_bytes()
        })
        .collect();
    writer
        .write_image_data(&bytes)
        .map_err(|e| format_err(path, e))?;
    writer.finish().map_err(|e| format_err(path, e))
}
