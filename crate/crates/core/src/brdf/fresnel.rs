use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Rgb;

/// Complex index of refraction `n + i k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexIor {
    pub n: f64,
    pub k: f64,
}

/// How the normal-incidence reflectance of a specular term is specified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FresnelSpec {
    /// Reflectance at normal incidence given directly.
    F0Direct(Rgb),
    /// Conductor: one complex index per channel.
    ComplexIor([ComplexIor; 3]),
    /// Dielectric: a single real index shared by all channels.
    RealIor(f64),
}

/// Normal-incidence reflectance of an interface with (complex) relative
/// index `c`: `(c - 1)(c* - 1) / ((c + 1)(c* + 1))`.
///
/// Both products are `|c -/+ 1|^2`, so the ratio is real and lies in `[0, 1]`
/// whenever `n >= 0`.
pub fn f0_complex(c: ComplexIor) -> f64 {
    let num = (c.n - 1.0) * (c.n - 1.0) + c.k * c.k;
    let den = (c.n + 1.0) * (c.n + 1.0) + c.k * c.k;
    if den == 0.0 {
        // c = -1 is excluded by n >= 0; this only guards against n = -1 input.
        return 1.0;
    }
    num / den
}

pub fn f0_from_ior(f: &FresnelSpec) -> Result<Rgb> {
    match *f {
        FresnelSpec::F0Direct(rgb) => {
            for v in rgb {
                if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                    return Err(Error::Domain(format!("F0 {v} outside [0, 1]")));
                }
            }
            Ok(rgb)
        }
        FresnelSpec::RealIor(c) => {
            if !c.is_finite() || c < 1.0 {
                return Err(Error::Domain(format!(
                    "real index of refraction {c} < 1 is not a physical dielectric"
                )));
            }
            let r = (c - 1.0) / (c + 1.0);
            let f0 = r * r;
            Ok([f0; 3])
        }
        FresnelSpec::ComplexIor(cs) => {
            let mut out = [0.0; 3];
            for (o, c) in out.iter_mut().zip(cs) {
                if !(c.n.is_finite() && c.k.is_finite()) || c.n < 0.0 || c.k < 0.0 {
                    return Err(Error::Domain(format!(
                        "complex index {} + {}i needs n >= 0 and k >= 0",
                        c.n, c.k
                    )));
                }
                *o = f0_complex(c);
            }
            Ok(out)
        }
    }
}

/// Schlick's approximation of the Fresnel reflectance.
#[inline]
pub fn schlick(f0: f64, cos_theta: f64) -> f64 {
    let m = (1.0 - cos_theta).clamp(0.0, 1.0);
    let m2 = m * m;
    let f90 = (SCHLICK_F90_GAIN * f0).min(1.0);
    f0 + (f90 - f0) * m2 * m2 * m
}

/// Grazing reflectance is `min(1, SCHLICK_F90_GAIN * F0)`, so that F0 = 0
/// reflects nothing at any angle (as an index-matched interface does) while
/// F0 >= 0.02 gives the usual Schlick curve.
pub const SCHLICK_F90_GAIN: f64 = 50.0;
