//! Spatially-varying materials stored as texture maps, and their remapping
//! through a learned transform.
//!
//! Map binding: the diffuse map drives the diffuse parameters, the specular
//! map the specular reflectance (F0 for Fresnel models), the roughness map
//! the roughness. Normals are tangent-space vectors stored encoded as
//! `0.5 * n + 0.5` and are passed through untouched.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brdf::{BrdfModel, Material, Pass, MAX_ROUGHNESS, MIN_ROUGHNESS};
use crate::error::{Error, Result};
use crate::image::{pfm, read_pfm, read_png, write_png16, write_png_srgb, PfmData, RenderedImage, Transfer};
use crate::math::Vec3;
use crate::render::{render_plane, LightConfig};
use crate::xform::ParamTransform;

pub const MANIFEST: &str = "manifest.toml";
pub const TONEMAP_SAMPLES: usize = 256;
/// Camera distance of the plane preview; the plane spans `[-1, 1]^2`.
pub const PREVIEW_CAMERA_DISTANCE: f64 = 4.0;
/// Allowed deviation of a decoded normal's length from 1.
pub const NORMAL_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct SvbrdfMaps {
    pub model: BrdfModel,
    pub width: usize,
    pub height: usize,
    /// Linear RGB.
    pub diffuse: Vec<[f32; 3]>,
    /// Linear RGB.
    pub specular: Vec<[f32; 3]>,
    pub roughness: Vec<f32>,
    /// Encoded tangent-space normals.
    pub normals: Vec<[f32; 3]>,
}

#[inline]
pub fn decode_normal(t: [f32; 3]) -> Vec3 {
    Vec3::new(
        2.0 * t[0] as f64 - 1.0,
        2.0 * t[1] as f64 - 1.0,
        2.0 * t[2] as f64 - 1.0,
    )
}

/// Encoded value of the unperturbed normal `(0, 0, 1)`.
pub const FLAT_NORMAL: [f32; 3] = [0.5, 0.5, 1.0];

impl SvbrdfMaps {
    /// Uniform material with flat normals.
    pub fn uniform(model: BrdfModel, width: usize, height: usize, diffuse: [f32; 3], specular: [f32; 3], roughness: f32) -> Self {
        let n = width * height;
        SvbrdfMaps {
            model,
            width,
            height,
            diffuse: vec![diffuse; n],
            specular: vec![specular; n],
            roughness: vec![roughness; n],
            normals: vec![FLAT_NORMAL; n],
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Checks map sizes, roughness range, finiteness and normal lengths.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        for (name, len) in [
            ("diffuse", self.diffuse.len()),
            ("specular", self.specular.len()),
            ("roughness", self.roughness.len()),
            ("normals", self.normals.len()),
        ] {
            if len != n {
                return Err(Error::Dimension(format!(
                    "{name} map has {len} texels, expected {}x{} = {n}",
                    self.width, self.height
                )));
            }
        }
        if let Some(i) = self.roughness.iter().position(|&a| !(a > 0.0 && a <= 1.0)) {
            return Err(Error::Domain(format!(
                "roughness texel {i} = {} outside (0, 1]",
                self.roughness[i]
            )));
        }
        let bad_color = |m: &[[f32; 3]]| m.iter().position(|t| t.iter().any(|v| !v.is_finite() || *v < 0.0));
        if let Some(i) = bad_color(&self.diffuse) {
            return Err(Error::Domain(format!("diffuse texel {i} is negative or not finite")));
        }
        if let Some(i) = bad_color(&self.specular) {
            return Err(Error::Domain(format!("specular texel {i} is negative or not finite")));
        }
        if let Some(i) = self
            .normals
            .iter()
            .position(|t| (decode_normal(*t).length() - 1.0).abs() > NORMAL_TOLERANCE)
        {
            return Err(Error::Domain(format!("normal texel {i} does not decode to a unit vector")));
        }
        Ok(())
    }

    /// Evaluation material of one texel.
    #[inline]
    pub fn material_at(&self, i: usize) -> Material {
        let d = self.diffuse[i];
        let s = self.specular[i];
        Material {
            model: self.model,
            diffuse: [d[0] as f64, d[1] as f64, d[2] as f64],
            specular: [s[0] as f64, s[1] as f64, s[2] as f64],
            roughness: (self.roughness[i] as f64).clamp(MIN_ROUGHNESS, MAX_ROUGHNESS),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemapStats {
    pub texels: usize,
    /// Individual values clamped into the target model's bounds.
    pub clamped_values: usize,
    /// Texels with an input outside the transform's fitted domain.
    pub extrapolated_texels: usize,
}

/// Remaps every texel through `t`. Results are clamped into the target
/// model's bounds (and counted); normals are copied unchanged.
pub fn remap_maps<T: ParamTransform + ?Sized>(m: &SvbrdfMaps, t: &T) -> Result<(SvbrdfMaps, RemapStats)> {
    m.validate()?;
    if m.model != t.source_model() {
        return Err(Error::Config(format!(
            "maps describe {} but the transform expects {}",
            m.model,
            t.source_model()
        )));
    }
    let target = t.target_model();
    let spec_hi = target.specular_upper();
    let out: Vec<([f32; 3], [f32; 3], f32, usize, bool)> = (0..m.len())
        .into_par_iter()
        .with_min_len(4096)
        .map(|i| {
            let d = m.diffuse[i];
            let s = m.specular[i];
            let p = t.map(
                [d[0] as f64, d[1] as f64, d[2] as f64],
                [s[0] as f64, s[1] as f64, s[2] as f64],
                m.roughness[i] as f64,
            );
            let mut clamped = 0;
            let mut clamp = |v: f64, lo: f64, hi: f64| -> f32 {
                if v < lo || v > hi {
                    clamped += 1;
                }
                v.clamp(lo, hi) as f32
            };
            let dd = p.diffuse.map(|v| clamp(v, 0.0, f64::INFINITY));
            let ss = p.specular.map(|v| clamp(v, 0.0, spec_hi));
            let a = clamp(p.roughness, MIN_ROUGHNESS, MAX_ROUGHNESS);
            (dd, ss, a, clamped, p.extrapolated)
        })
        .collect();
    let mut stats = RemapStats {
        texels: m.len(),
        ..Default::default()
    };
    let mut maps = SvbrdfMaps {
        model: target,
        width: m.width,
        height: m.height,
        diffuse: Vec::with_capacity(m.len()),
        specular: Vec::with_capacity(m.len()),
        roughness: Vec::with_capacity(m.len()),
        normals: m.normals.clone(),
    };
    for (d, s, a, c, x) in out {
        maps.diffuse.push(d);
        maps.specular.push(s);
        maps.roughness.push(a);
        stats.clamped_values += c;
        stats.extrapolated_texels += usize::from(x);
    }
    Ok((maps, stats))
}

/// `TONEMAP_SAMPLES` points `(a1, a2)` of the roughness mapping at `a1 = i / 255`.
pub fn tonemap_curve<T: ParamTransform + ?Sized>(t: &T) -> Vec<(f64, f64)> {
    (0..TONEMAP_SAMPLES)
        .map(|i| {
            let a = i as f64 / (TONEMAP_SAMPLES - 1) as f64;
            (a, t.map([0.0; 3], [0.0; 3], a).roughness)
        })
        .collect()
}

/// Piecewise-linear lookup into a curve from [`tonemap_curve`].
pub fn curve_lookup(curve: &[(f64, f64)], a: f64) -> f64 {
    let n = curve.len();
    let x = (a * (n - 1) as f64).clamp(0.0, (n - 1) as f64);
    let i = (x.floor() as usize).min(n - 2);
    let f = x - i as f64;
    curve[i].1 * (1.0 - f) + curve[i + 1].1 * f
}

/// Fronto-parallel plane preview, one pixel per texel, shaded with each
/// texel's parameters and normal.
pub fn preview_render(m: &SvbrdfMaps, light: &LightConfig, pass: Pass) -> Result<RenderedImage> {
    m.validate()?;
    let w = m.width;
    render_plane(m.width, m.height, light, PREVIEW_CAMERA_DISTANCE, pass, |x, y| {
        let i = y * w + x;
        (m.material_at(i), decode_normal(m.normals[i]))
    })
}

/// One map entry of a material folder manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapFile {
    pub file: PathBuf,
    /// Transfer of integer (PNG) texels; PFM is always linear.
    #[serde(default = "linear")]
    pub transfer: Transfer,
}

fn linear() -> Transfer {
    Transfer::Linear
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub model: BrdfModel,
    pub diffuse: MapFile,
    pub specular: MapFile,
    pub roughness: MapFile,
    pub normals: MapFile,
}

fn read_map(dir: &Path, entry: &MapFile, channels: usize, name: &str) -> Result<PfmData> {
    let path = dir.join(&entry.file);
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let data = match ext.as_str() {
        "pfm" => read_pfm(&path)?,
        "png" => read_png(&path, entry.transfer)?,
        _ => {
            return Err(Error::Format(format!(
                "{}: unsupported map format (use .png or .pfm)",
                path.display()
            )))
        }
    };
    if data.channels != channels && !(channels == 3 && data.channels == 1) {
        return Err(Error::Format(format!(
            "{name} map {} has {} channels, expected {channels}",
            path.display(),
            data.channels
        )));
    }
    Ok(data)
}

fn rgb_texels(d: &PfmData) -> Vec<[f32; 3]> {
    match d.channels {
        3 => d.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        _ => d.data.iter().map(|&v| [v; 3]).collect(),
    }
}

/// Loads a material folder described by its `manifest.toml`.
pub fn load_material(dir: impl AsRef<Path>) -> Result<SvbrdfMaps> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest =
        toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    for (name, entry) in [("roughness", &manifest.roughness), ("normals", &manifest.normals)] {
        if entry.transfer != Transfer::Linear {
            return Err(Error::Format(format!("{name} map must be linear-encoded")));
        }
    }
    let diffuse = read_map(dir, &manifest.diffuse, 3, "diffuse")?;
    let specular = read_map(dir, &manifest.specular, 3, "specular")?;
    let roughness = read_map(dir, &manifest.roughness, 1, "roughness")?;
    let normals = read_map(dir, &manifest.normals, 3, "normals")?;
    for (name, d) in [("specular", &specular), ("roughness", &roughness), ("normals", &normals)] {
        if (d.width, d.height) != (diffuse.width, diffuse.height) {
            return Err(Error::Dimension(format!(
                "{name} map is {}x{}, diffuse map is {}x{}",
                d.width, d.height, diffuse.width, diffuse.height
            )));
        }
    }
    let maps = SvbrdfMaps {
        model: manifest.model,
        width: diffuse.width,
        height: diffuse.height,
        diffuse: rgb_texels(&diffuse),
        specular: rgb_texels(&specular),
        roughness: roughness.data.clone(),
        normals: rgb_texels(&normals),
    };
    maps.validate()?;
    Ok(maps)
}

/// How [`save_material`] encodes the maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapEncoding {
    /// Lossless floats; the default for remapped output, where values may exceed 1.
    Pfm,
    /// 16-bit PNG: sRGB for colour maps, linear for roughness and normals.
    Png16,
}

/// Writes the maps and a manifest into `dir`, creating it if needed.
pub fn save_material(m: &SvbrdfMaps, dir: impl AsRef<Path>, encoding: MapEncoding) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let flat3 = |v: &[[f32; 3]]| -> Vec<f32> { v.iter().flatten().copied().collect() };
    let maps: [(&str, Vec<f32>, usize, Transfer); 4] = [
        ("diffuse", flat3(&m.diffuse), 3, Transfer::Srgb),
        ("specular", flat3(&m.specular), 3, Transfer::Srgb),
        ("roughness", m.roughness.clone(), 1, Transfer::Linear),
        ("normals", flat3(&m.normals), 3, Transfer::Linear),
    ];
    let mut entries = Vec::new();
    for (name, data, channels, transfer) in maps {
        let entry = match encoding {
            MapEncoding::Pfm => {
                let file = PathBuf::from(format!("{name}.pfm"));
                let path = dir.join(&file);
                fs::write(&path, pfm::encode(m.width, m.height, channels, &data))
                    .map_err(|e| Error::io(&path, e))?;
                MapFile {
                    file,
                    transfer: Transfer::Linear,
                }
            }
            MapEncoding::Png16 => {
                let file = PathBuf::from(format!("{name}.png"));
                write_png16(dir.join(&file), m.width, m.height, channels, &data, transfer)?;
                MapFile { file, transfer }
            }
        };
        entries.push(entry);
    }
    let mut it = entries.into_iter();
    let manifest = Manifest {
        model: m.model,
        diffuse: it.next().expect("four maps"),
        specular: it.next().expect("four maps"),
        roughness: it.next().expect("four maps"),
        normals: it.next().expect("four maps"),
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    let path = dir.join(MANIFEST);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Writes a preview as PFM plus an sRGB PNG next to it.
pub fn save_preview(img: &RenderedImage, stem: impl AsRef<Path>) -> Result<()> {
    let stem = stem.as_ref();
    crate::image::write_pfm(stem.with_extension("pfm"), img)?;
    write_png_srgb(stem.with_extension("png"), img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::xform::TransformModel;

    fn varied(w: usize, h: usize) -> SvbrdfMaps {
        let mut m = SvbrdfMaps::uniform(BrdfModel::WardA, w, h, [0.3, 0.2, 0.1], [0.2; 3], 0.3);
        for i in 0..w * h {
            let t = i as f32 / (w * h) as f32;
            m.roughness[i] = 0.05 + 0.9 * t;
            m.specular[i] = [0.1 + 0.3 * t, 0.2, 0.05];
        }
        m
    }

    #[test]
    fn validation_catches_bad_maps() {
        let mut m = varied(4, 4);
        m.validate().unwrap();
        m.roughness[3] = 0.0;
        assert!(matches!(m.validate(), Err(Error::Domain(_))));
        let mut m = varied(4, 4);
        m.normals.pop();
        assert!(matches!(m.validate(), Err(Error::Dimension(_))));
        let mut m = varied(4, 4);
        m.normals[0] = [0.5, 0.5, 0.5];
        assert!(m.validate().is_err());
    }

    #[test]
    fn identity_remap_is_bit_identical() {
        let m = varied(8, 6);
        let (out, stats) = remap_maps(&m, &TransformModel::identity(BrdfModel::WardA)).unwrap();
        assert_eq!(out, m);
        assert_eq!(stats.clamped_values, 0);
    }

    #[test]
    fn wrong_source_model_is_rejected() {
        let m = varied(2, 2);
        assert!(remap_maps(&m, &TransformModel::identity(BrdfModel::Ggx)).is_err());
    }

    #[test]
    fn out_of_range_values_are_clamped_and_counted() {
        let mut t = TransformModel::identity(BrdfModel::WardA);
        t.target_model = BrdfModel::Ggx;
        t.slope = [3.0, 0.0, 0.0, 0.0, 0.0];
        let m = varied(4, 4);
        let (out, stats) = remap_maps(&m, &t).unwrap();
        assert!(stats.clamped_values > 0);
        assert!(out.specular.iter().flatten().all(|v| *v <= 1.0));
    }

    #[test]
    fn identity_tonemap_is_diagonal() {
        let c = tonemap_curve(&TransformModel::identity(BrdfModel::Ggx));
        assert_eq!(c.len(), 256);
        for (a, b) in &c[1..] {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((curve_lookup(&c, 0.5) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn black_maps_render_black() {
        let m = SvbrdfMaps::uniform(BrdfModel::Ggx, 16, 16, [0.0; 3], [0.0; 3], 0.3);
        let img = preview_render(&m, &LightConfig::default(), Pass::Full).unwrap();
        assert_eq!(img.max_value(), 0.0);
    }

    #[test]
    fn material_folder_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = varied(5, 3);
        save_material(&m, dir.path(), MapEncoding::Pfm).unwrap();
        assert_eq!(load_material(dir.path()).unwrap(), m);

        let png = dir.path().join("png");
        save_material(&m, &png, MapEncoding::Png16).unwrap();
        let back = load_material(&png).unwrap();
        for (a, b) in back.roughness.iter().zip(&m.roughness) {
            assert!((a - b).abs() < 1e-4);
        }
        for (a, b) in back.specular.iter().flatten().zip(m.specular.iter().flatten()) {
            assert!((a - b).abs() < 1e-3);
        }
    }
}
