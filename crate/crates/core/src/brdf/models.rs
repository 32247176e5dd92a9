use std::f64::consts::{FRAC_1_PI, PI};

use super::{schlick, BrdfModel, Material, ShadingGeometry};
use crate::math::{rgb_scale, Rgb};

/// Phong-style exponent for a roughness value.
#[inline]
fn phong_exponent(alpha: f64) -> f64 {
    2.0 / (alpha * alpha) - 2.0
}

/// Squared tangent of the angle between `n` and a direction with cosine `c`.
#[inline]
fn tan2(c: f64) -> f64 {
    let c2 = c * c;
    ((1.0 - c2) / c2).max(0.0)
}

/// Isotropic GGX normal distribution.
pub fn ggx_distribution(alpha: f64, cos_h: f64) -> f64 {
    if cos_h <= 0.0 {
        return 0.0;
    }
    let a2 = alpha * alpha;
    let c2 = cos_h * cos_h;
    let d = c2 * (a2 - 1.0) + 1.0;
    a2 / (PI * d * d)
}

/// Isotropic Beckmann normal distribution.
pub fn beckmann_distribution(alpha: f64, cos_h: f64) -> f64 {
    if cos_h <= 0.0 {
        return 0.0;
    }
    let a2 = alpha * alpha;
    let c2 = cos_h * cos_h;
    (-tan2(cos_h) / a2).exp() / (PI * a2 * c2 * c2)
}

#[inline]
fn ggx_g1(alpha: f64, cos_v: f64) -> f64 {
    2.0 / (1.0 + (1.0 + alpha * alpha * tan2(cos_v)).sqrt())
}

/// Smith masking for Beckmann with Walter's rational approximation.
#[inline]
fn beckmann_g1(alpha: f64, cos_v: f64) -> f64 {
    let t = tan2(cos_v).sqrt();
    if t == 0.0 {
        return 1.0;
    }
    let a = 1.0 / (alpha * t);
    if a >= 1.6 {
        return 1.0;
    }
    (3.535 * a + 2.181 * a * a) / (1.0 + 2.276 * a + 2.577 * a * a)
}

pub(super) fn diffuse(m: &Material, cos_i: f64, cos_o: f64) -> Rgb {
    match m.model {
        BrdfModel::AshikhminShirley => {
            let pi = 1.0 - (1.0 - 0.5 * cos_i).powi(5);
            let po = 1.0 - (1.0 - 0.5 * cos_o).powi(5);
            let k = 28.0 / (23.0 * PI) * pi * po;
            [0, 1, 2].map(|c| k * m.diffuse[c] * (1.0 - m.specular[c]))
        }
        _ => rgb_scale(m.diffuse, FRAC_1_PI),
    }
}

pub(super) fn specular(m: &Material, g: &ShadingGeometry, cos_i: f64, cos_o: f64) -> Rgb {
    if !m.model.has_specular() {
        return [0.0; 3];
    }
    let alpha = m.roughness;
    let hu = g.wi + g.wo;
    let hu_len2 = hu.length_squared();
    if hu_len2 <= 0.0 {
        return [0.0; 3];
    }
    let hu_dot_n = hu.dot(g.n);
    let cos_h = hu_dot_n / hu_len2.sqrt();
    if cos_h <= 0.0 {
        return [0.0; 3];
    }
    // v.h == l.h for the half vector.
    let cos_d = g.wo.dot(hu) / hu_len2.sqrt();
    match m.model {
        BrdfModel::Lambert => [0.0; 3],
        BrdfModel::WardA => {
            let a2 = alpha * alpha;
            let lobe = (-tan2(cos_h) / a2).exp() / (4.0 * PI * a2 * (cos_i * cos_o).sqrt());
            rgb_scale(m.specular, lobe)
        }
        BrdfModel::WardB => {
            let a2 = alpha * alpha;
            let n4 = hu_dot_n * hu_dot_n * hu_dot_n * hu_dot_n;
            let lobe = (-tan2(cos_h) / a2).exp() * hu_len2 / (PI * a2 * n4);
            m.specular.map(|s| s.min(1.0) * lobe)
        }
        BrdfModel::Beckmann | BrdfModel::Ggx => {
            let (d, g2) = if m.model == BrdfModel::Ggx {
                (
                    ggx_distribution(alpha, cos_h),
                    ggx_g1(alpha, cos_i) * ggx_g1(alpha, cos_o),
                )
            } else {
                (
                    beckmann_distribution(alpha, cos_h),
                    beckmann_g1(alpha, cos_i) * beckmann_g1(alpha, cos_o),
                )
            };
            let lobe = d * g2 / (4.0 * cos_i * cos_o);
            m.specular.map(|f0| schlick(f0, cos_d) * lobe)
        }
        BrdfModel::BlinnPhong => {
            // Normalized so the albedo at normal incidence equals rho_s.
            let e = phong_exponent(alpha);
            let norm = (e + 2.0) * (e + 4.0) / (8.0 * PI * ((-e / 2.0).exp2() + e));
            rgb_scale(m.specular, norm * cos_h.powf(e))
        }
        BrdfModel::AshikhminShirley => {
            let e = phong_exponent(alpha);
            let lobe = (e + 1.0) / (8.0 * PI) * cos_h.powf(e) / (cos_d * cos_i.max(cos_o));
            m.specular.map(|f0| schlick(f0, cos_d) * lobe)
        }
    }
}
