//! Direct-lighting renderer of the comparison scene: one sphere, one point
//! light, a pinhole camera and one primary ray per pixel.
//!
//! Per pixel the outgoing radiance is `f(wi, wo) * I * max(0, n.wi) / d^2`.
//! There is no sampling noise, so renders are deterministic and smooth in the
//! BRDF parameters, which is what the optimizer needs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brdf::{BrdfSpec, Material, Pass, ShadingGeometry};
use crate::error::{Error, Result};
use crate::image::RenderedImage;
use crate::math::{Rgb, Vec3};

/// Light intensity giving a peak diffuse radiance of 0.8 for unit albedo
/// with the default camera and headlight (`0.8 * pi * 6^2`).
pub const DEFAULT_INTENSITY: f64 = 0.8 * std::f64::consts::PI * 36.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum LightMode {
    /// Point light at the camera position.
    Headlight,
    /// Light rotated by `theta_deg` away from the camera direction about the
    /// camera's up axis.
    Oblique { theta_deg: f64 },
}

impl std::str::FromStr for LightMode {
    type Err = Error;

    /// Parses `headlight` or `oblique:<degrees>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "headlight" {
            return Ok(LightMode::Headlight);
        }
        if let Some(deg) = s.strip_prefix("oblique:") {
            let theta_deg: f64 = deg
                .parse()
                .map_err(|_| Error::Config(format!("bad light angle '{deg}'")))?;
            return Ok(LightMode::Oblique { theta_deg });
        }
        Err(Error::Config(format!(
            "light must be 'headlight' or 'oblique:<deg>', got '{s}'"
        )))
    }
}

impl std::fmt::Display for LightMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LightMode::Headlight => write!(f, "headlight"),
            LightMode::Oblique { theta_deg } => write!(f, "oblique:{theta_deg}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LightConfig {
    pub mode: LightMode,
    /// Radiant intensity in W/sr.
    pub intensity: Rgb,
    /// Distance from the look-at point.
    pub distance: f64,
}

impl Default for LightConfig {
    fn default() -> Self {
        LightConfig {
            mode: LightMode::Headlight,
            intensity: [DEFAULT_INTENSITY; 3],
            distance: 8.0,
        }
    }
}

impl LightConfig {
    pub fn oblique(theta_deg: f64) -> Self {
        LightConfig {
            mode: LightMode::Oblique { theta_deg },
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.intensity.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config("light intensity must be finite and >= 0".into()));
        }
        if !(self.distance.is_finite() && self.distance > 0.0) {
            return Err(Error::Config("light distance must be > 0".into()));
        }
        if let LightMode::Oblique { theta_deg } = self.mode {
            if !(theta_deg > 0.0 && theta_deg < 90.0) {
                return Err(Error::Config(format!(
                    "oblique light angle {theta_deg} outside (0, 90) degrees"
                )));
            }
        }
        Ok(())
    }

    /// World-space light position for a camera at `camera` looking at `target`.
    pub fn position(&self, camera: Vec3, target: Vec3, up: Vec3) -> Vec3 {
        let to_cam = (camera - target).normalized();
        let dir = match self.mode {
            LightMode::Headlight => to_cam,
            LightMode::Oblique { theta_deg } => rotate_about(to_cam, up, theta_deg.to_radians()),
        };
        target + dir * self.distance
    }

    fn scaled(&self, s: f64) -> Rgb {
        self.intensity.map(|v| v * s)
    }
}

/// Rodrigues rotation of `v` about unit `axis`.
fn rotate_about(v: Vec3, axis: Vec3, angle: f64) -> Vec3 {
    let (s, c) = angle.sin_cos();
    v * c + axis.cross(v) * s + axis * (axis.dot(v) * (1.0 - c))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub sphere_radius: f64,
    pub sphere_center: Vec3,
    pub camera_position: Vec3,
    pub camera_look_at: Vec3,
    pub vertical_fov_deg: f64,
    pub light: LightConfig,
    pub width: usize,
    pub height: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            sphere_radius: 2.0,
            sphere_center: Vec3::ZERO,
            camera_position: Vec3::new(0.0, 0.0, 8.0),
            camera_look_at: Vec3::ZERO,
            vertical_fov_deg: 32.0,
            light: LightConfig::default(),
            width: 512,
            height: 512,
        }
    }
}

impl SceneConfig {
    pub fn with_size(size: usize) -> Self {
        SceneConfig {
            width: size,
            height: size,
            ..Default::default()
        }
    }

    pub fn with_light(mut self, light: LightConfig) -> Self {
        self.light = light;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.light.validate()?;
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("image size must be positive".into()));
        }
        if !(self.sphere_radius > 0.0) {
            return Err(Error::Config("sphere radius must be positive".into()));
        }
        let d = (self.camera_position - self.sphere_center).length();
        if d <= self.sphere_radius {
            return Err(Error::Config("camera is inside the sphere".into()));
        }
        if !(self.vertical_fov_deg > 0.0 && self.vertical_fov_deg < 180.0) {
            return Err(Error::Config("vertical fov must be in (0, 180)".into()));
        }
        // Image-plane half height of the sphere's silhouette over that of the frustum.
        let half_angle = (self.sphere_radius / d).asin();
        let coverage = half_angle.tan() / (0.5 * self.vertical_fov_deg.to_radians()).tan();
        if coverage < 0.6 {
            return Err(Error::Config(format!(
                "sphere covers only {:.0}% of the image height (need >= 60%)",
                coverage * 100.0
            )));
        }
        Ok(())
    }

    fn camera_frame(&self) -> (Vec3, Vec3, Vec3) {
        let forward = (self.camera_look_at - self.camera_position).normalized();
        let world_up = if forward.cross(Vec3::Y).length() < 1e-9 {
            Vec3::Z
        } else {
            Vec3::Y
        };
        let right = forward.cross(world_up).normalized();
        let up = right.cross(forward);
        (forward, right, up)
    }

    pub fn light_position(&self) -> Vec3 {
        let (_, _, up) = self.camera_frame();
        self.light
            .position(self.camera_position, self.camera_look_at, up)
    }
}

/// Per-pixel shading inputs, independent of the material.
#[derive(Debug, Clone, Copy)]
struct Hit {
    g: ShadingGeometry,
    /// `max(0, n.wi) / d^2`
    falloff: f64,
}

/// A scene with ray intersections precomputed, so repeated renders of
/// different materials only pay for BRDF evaluation.
#[derive(Debug, Clone)]
pub struct Renderer {
    scene: SceneConfig,
    hits: Vec<Option<Hit>>,
}

impl Renderer {
    pub fn new(scene: &SceneConfig) -> Result<Self> {
        scene.validate()?;
        let (forward, right, up) = scene.camera_frame();
        let light = scene.light_position();
        let (w, h) = (scene.width, scene.height);
        let tan_half = (0.5 * scene.vertical_fov_deg.to_radians()).tan();
        let aspect = w as f64 / h as f64;
        let origin = scene.camera_position;
        let hits = (0..w * h)
            .into_par_iter()
            .map(|i| {
                let (x, y) = (i % w, i / w);
                let u = ((x as f64 + 0.5) / w as f64 * 2.0 - 1.0) * tan_half * aspect;
                let v = (1.0 - (y as f64 + 0.5) / h as f64 * 2.0) * tan_half;
                let dir = (forward + right * u + up * v).normalized();
                intersect_sphere(origin, dir, scene.sphere_center, scene.sphere_radius).map(|t| {
                    let p = origin + dir * t;
                    let n = ((p - scene.sphere_center) * (1.0 / scene.sphere_radius)).normalized();
                    let to_light = light - p;
                    let d2 = to_light.length_squared();
                    let wi = to_light * (1.0 / d2.sqrt());
                    Hit {
                        g: ShadingGeometry { wi, wo: -dir, n },
                        falloff: n.dot(wi).max(0.0) / d2,
                    }
                })
            })
            .collect();
        Ok(Renderer {
            scene: scene.clone(),
            hits,
        })
    }

    pub fn scene(&self) -> &SceneConfig {
        &self.scene
    }

    pub fn covered_pixels(&self) -> usize {
        self.hits.iter().filter(|h| h.is_some()).count()
    }

    pub fn render_material(&self, m: &Material, pass: Pass) -> RenderedImage {
        self.render_material_scaled(m, pass, 1.0)
    }

    /// Renders with the light intensity multiplied by `light_scale`.
    pub fn render_material_scaled(&self, m: &Material, pass: Pass, light_scale: f64) -> RenderedImage {
        let intensity = self.scene.light.scaled(light_scale);
        let pixels = self
            .hits
            .par_iter()
            .with_min_len(256)
            .map(|hit| match hit {
                None => [0.0; 3],
                Some(hit) => radiance(m, &hit.g, pass, intensity, hit.falloff),
            })
            .collect();
        RenderedImage {
            width: self.scene.width,
            height: self.scene.height,
            pixels,
            pass,
        }
    }

    pub fn render(&self, spec: &BrdfSpec, pass: Pass) -> Result<RenderedImage> {
        Ok(self.render_material(&spec.material()?, pass))
    }
}

/// Outgoing radiance for one pass. The full pass is the sum of the two
/// single-term radiances so that pass images add up exactly.
#[inline]
fn radiance(m: &Material, g: &ShadingGeometry, pass: Pass, intensity: Rgb, falloff: f64) -> Rgb {
    let term = |p: Pass| {
        let f = m.eval(g, p);
        [0, 1, 2].map(|c| f[c] * intensity[c] * falloff)
    };
    match pass {
        Pass::Full => {
            let d = term(Pass::DiffuseOnly);
            let s = term(Pass::SpecularOnly);
            [d[0] + s[0], d[1] + s[1], d[2] + s[2]]
        }
        p => term(p),
    }
}

fn intersect_sphere(o: Vec3, d: Vec3, c: Vec3, r: f64) -> Option<f64> {
    let oc = o - c;
    let b = oc.dot(d);
    let cc = oc.length_squared() - r * r;
    let disc = b * b - cc;
    if disc < 0.0 {
        return None;
    }
    let t = -b - disc.sqrt();
    (t > 0.0).then_some(t)
}

pub fn render(spec: &BrdfSpec, scene: &SceneConfig, pass: Pass) -> Result<RenderedImage> {
    Renderer::new(scene)?.render(spec, pass)
}

/// Least-squares scale `s` minimizing `|src - s * dst|^2` between two
/// diffuse-only renders of different renderers. Multiply the target
/// renderer's light intensity by `s` before remapping.
pub fn irradiance_match(src: &RenderedImage, dst: &RenderedImage) -> Result<f64> {
    crate::image::check_same_size(src.width, src.height, dst.width, dst.height)?;
    if src.pass != Pass::DiffuseOnly || dst.pass != Pass::DiffuseOnly {
        return Err(Error::Config(
            "irradiance matching needs diffuse-only renders".into(),
        ));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (a, b) in src.pixels.iter().zip(&dst.pixels) {
        for c in 0..3 {
            num += a[c] * b[c];
            den += b[c] * b[c];
        }
    }
    if den == 0.0 || !den.is_finite() {
        return Err(Error::DegenerateMatch("target render has no energy".into()));
    }
    Ok(num / den)
}

/// Fronto-parallel unit-quad preview: the plane `[-1, 1]^2` at `z = 0` seen
/// from `(0, 0, camera_distance)`, one pixel per texel. `shade(x, y)` gives
/// the texel's material and tangent-space normal.
pub fn render_plane<F>(
    width: usize,
    height: usize,
    light: &LightConfig,
    camera_distance: f64,
    pass: Pass,
    shade: F,
) -> Result<RenderedImage>
where
    F: Fn(usize, usize) -> (Material, Vec3) + Sync,
{
    light.validate()?;
    let camera = Vec3::new(0.0, 0.0, camera_distance);
    let light_pos = light.position(camera, Vec3::ZERO, Vec3::Y);
    let pixels = (0..width * height)
        .into_par_iter()
        .map(|i| {
            let (x, y) = (i % width, i / width);
            let p = Vec3::new(
                (x as f64 + 0.5) / width as f64 * 2.0 - 1.0,
                1.0 - (y as f64 + 0.5) / height as f64 * 2.0,
                0.0,
            );
            let (m, tn) = shade(x, y);
            // Tangent frame of the plane is the world frame.
            let n = tn.normalized();
            let wo = (camera - p).normalized();
            let to_light = light_pos - p;
            let d2 = to_light.length_squared();
            let wi = to_light * (1.0 / d2.sqrt());
            if wi.z <= 0.0 || wo.z <= 0.0 {
                return [0.0; 3];
            }
            let g = ShadingGeometry { wi, wo, n };
            let falloff = n.dot(wi).max(0.0) / d2;
            radiance(&m, &g, pass, light.intensity, falloff)
        })
        .collect();
    RenderedImage::from_pixels(width, height, pixels, pass)
}
