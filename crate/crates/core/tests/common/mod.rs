#![allow(dead_code)]

use std::f64::consts::{FRAC_PI_2, PI};

use brdfmap::brdf::{BrdfModel, BrdfSpec, Material, Pass, ShadingGeometry};
use brdfmap::math::Vec3;
use brdfmap::remap::RemapScheme;
use brdfmap::xform::{slope_fn, DbRow, RemapDatabase, SweepAxes};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform direction on the upper hemisphere, kept a little above the horizon.
pub fn upper_direction(r: &mut impl Rng) -> Vec3 {
    let cos = r.random_range(0.02..1.0f64);
    let phi = r.random_range(0.0..2.0 * PI);
    Vec3::from_spherical(cos.acos(), phi)
}

pub fn random_geometry(r: &mut impl Rng) -> ShadingGeometry {
    ShadingGeometry::new(upper_direction(r), upper_direction(r), Vec3::Z).unwrap()
}

pub fn random_spec(r: &mut impl Rng, model: BrdfModel) -> BrdfSpec {
    let diffuse = [0; 3].map(|_| r.random_range(0.0..1.0));
    let specular = [0; 3].map(|_| r.random_range(0.0..1.0));
    let roughness = r.random_range(0.01..1.0);
    BrdfSpec::from_components(model, diffuse, specular, roughness).unwrap()
}

/// `int D(h) cos(theta_h) dw` over the hemisphere. The polar angle is
/// substituted as `theta = atan(alpha tan(u))` so that narrow lobes get
/// enough samples.
pub fn projected_ndf_integral(d: impl Fn(f64, f64) -> f64, alpha: f64) -> f64 {
    let n = 20_000;
    let h = FRAC_PI_2 / n as f64;
    let mut sum = 0.0;
    for i in 0..n {
        let u = (i as f64 + 0.5) * h;
        let t = u.tan();
        let theta = (alpha * t).atan();
        let dtheta = alpha / (u.cos().powi(2) * (1.0 + alpha * alpha * t * t));
        let c = theta.cos();
        sum += d(alpha, c) * c * theta.sin() * dtheta;
    }
    2.0 * PI * sum * h
}

/// Directional albedo `int f(wi, wo) cos(theta_i) dwi` of one channel by
/// midpoint quadrature.
pub fn directional_albedo(m: &Material, view_theta: f64, pass: Pass) -> f64 {
    let wo = Vec3::from_spherical(view_theta, 0.0);
    let (nt, np) = (1200, 480);
    let (dt, dp) = (FRAC_PI_2 / nt as f64, 2.0 * PI / np as f64);
    let mut sum = 0.0;
    for i in 0..nt {
        let t = (i as f64 + 0.5) * dt;
        let w = t.cos() * t.sin();
        for j in 0..np {
            let p = (j as f64 + 0.5) * dp;
            let g = ShadingGeometry {
                wi: Vec3::from_spherical(t, p),
                wo,
                n: Vec3::Z,
            };
            sum += m.eval(&g, pass)[0] * w;
        }
    }
    sum * dt * dp
}

/// Database whose targets follow `s2 = k(a) s1` exactly with `a2 = a1` and
/// unchanged diffuse.
pub fn synthetic_database(c: [f64; 5], roughness: &[f64], specular: &[f64]) -> RemapDatabase {
    let axes = SweepAxes::new(roughness.to_vec(), specular.to_vec())
        .with_diffuse_levels(vec![[0.1, 0.2, 0.3], [0.5, 0.4, 0.3], [0.8, 0.7, 0.2]]);
    let grid = axes.grid(&BrdfSpec::new(BrdfModel::WardA)).unwrap();
    let rows = grid
        .into_iter()
        .map(|s| {
            let a = s.roughness().unwrap();
            let k = slope_fn(&c, a);
            let sp = s.specular_reflectance().unwrap();
            let t = BrdfSpec::from_components(BrdfModel::WardB, s.diffuse(), sp.map(|v| v * k), a).unwrap();
            DbRow {
                source: s,
                target: Some(t),
                flags: Default::default(),
                l2: 0.0,
                mean_ssim: 1.0,
                error: None,
            }
        })
        .collect();
    RemapDatabase {
        source_model: BrdfModel::WardA,
        target_model: BrdfModel::WardB,
        scheme: RemapScheme::TwoStage,
        axes,
        rows,
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

/// Least-squares line `y = slope x + intercept` and its R^2.
pub fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    (slope, intercept, 1.0 - ss_res / ss_tot)
}
