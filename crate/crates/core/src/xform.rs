//! Compact transformations between two models' parameter spaces.
//!
//! A [`RemapDatabase`] of uniform remaps is condensed into a
//! [`TransformModel`]:
//!
//! * roughness: `a2 = poly(a1)`, a polynomial of degree at most 4;
//! * specular: `s2 = k(a1) * s1` per channel with
//!   `k(a) = c0 + c1 exp(-c2 a) + c3 exp(-c4 a^2)`;
//! * diffuse: a per-channel affine map.
//!
//! Applying a transform needs no rendering or optimization. The
//! coefficients of `k` are not identifiable (the two exponentials can trade
//! off), so only its function values are meaningful.
//!
//! [`KernelRegressor`] is an RBF kernel ridge baseline fitted to the same
//! data, with no structure imposed outside the sampled region.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::brdf::{BrdfModel, BrdfSpec, MAX_ROUGHNESS, MIN_ROUGHNESS};
use crate::error::{Error, Result};
use crate::math::Rgb;
use crate::optim::{self, OptimizationProblem};
use crate::remap::{csv_err, sweep_grid, RemapScheme, Remapper, ScanRow, StabilityFlags};

pub const FORMAT_NAME: &str = "brdfmap-transform";
pub const FORMAT_VERSION: u32 = 1;
pub const MAX_POLY_DEGREE: usize = 4;
pub const MIN_ROUGHNESS_LEVELS: usize = 5;
pub const MIN_SPECULAR_PER_LEVEL: usize = 3;
/// Fraction of unflagged rows a roughness level needs to be used.
pub const MIN_CLEAN_FRACTION: f64 = 0.6;
/// Starting values of `(c2, c4)` for the multi-start slope fit.
pub const SLOPE_SEEDS: [(f64, f64); 4] = [(1.0, 1.0), (5.0, 1.0), (1.0, 5.0), (10.0, 10.0)];
pub const MAX_DECAY: f64 = 1e3;
pub const KERNEL_RIDGE: f64 = 1e-6;

/// Parameter sweep used to build a database. Rows enumerate roughness
/// (outer) times specular (inner); `diffuse_levels` are cycled over the
/// roughness levels so that the diffuse map sees several inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAxes {
    pub roughness: Vec<f64>,
    pub specular: Vec<f64>,
    /// Parameter (or channel group) the specular values drive, usually
    /// `specular`, or `ior` for dielectric sources.
    pub specular_axis: String,
    pub diffuse_levels: Vec<Rgb>,
}

impl SweepAxes {
    pub fn new(roughness: Vec<f64>, specular: Vec<f64>) -> Self {
        SweepAxes {
            roughness,
            specular,
            specular_axis: "specular".into(),
            diffuse_levels: vec![[0.0; 3]],
        }
    }

    pub fn with_diffuse_levels(mut self, levels: Vec<Rgb>) -> Self {
        self.diffuse_levels = levels;
        self
    }

    pub fn with_specular_axis(mut self, axis: &str) -> Self {
        self.specular_axis = axis.to_string();
        self
    }

    /// Source specs in row order.
    pub fn grid(&self, template: &BrdfSpec) -> Result<Vec<BrdfSpec>> {
        if self.roughness.is_empty() || self.specular.is_empty() {
            return Err(Error::Config("sweep axes must not be empty".into()));
        }
        let levels = if self.diffuse_levels.is_empty() {
            vec![template.diffuse()]
        } else {
            self.diffuse_levels.clone()
        };
        let mut out = Vec::with_capacity(self.roughness.len() * self.specular.len());
        for (i, &a) in self.roughness.iter().enumerate() {
            let mut t = template.clone();
            let d = levels[i % levels.len()];
            for (n, v) in crate::brdf::DIFFUSE_NAMES.iter().zip(d) {
                t.set(n, v)?;
            }
            t.set(crate::brdf::ROUGHNESS, a)?;
            out.extend(sweep_grid(&t, &[(self.specular_axis.clone(), self.specular.clone())])?);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbRow {
    pub source: BrdfSpec,
    /// Fitted target parameters; absent when the remap failed.
    pub target: Option<BrdfSpec>,
    pub flags: StabilityFlags,
    pub l2: f64,
    pub mean_ssim: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl DbRow {
    pub fn is_clean(&self) -> bool {
        self.target.is_some() && !self.flags.any()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemapDatabase {
    pub source_model: BrdfModel,
    pub target_model: BrdfModel,
    pub scheme: RemapScheme,
    pub axes: SweepAxes,
    pub rows: Vec<DbRow>,
}

impl RemapDatabase {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let db: RemapDatabase = serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))?;
        for r in &db.rows {
            if r.source.model() != db.source_model || r.target.as_ref().is_some_and(|t| t.model() != db.target_model) {
                return Err(Error::Format("database rows disagree with its model pair".into()));
            }
        }
        Ok(db)
    }

    pub fn clean_rows(&self) -> impl Iterator<Item = &DbRow> {
        self.rows.iter().filter(|r| r.is_clean())
    }
}

/// Remaps every sweep point of `template`'s model to `target_model`.
pub fn build_database(
    remapper: &Remapper,
    template: &BrdfSpec,
    target_model: BrdfModel,
    axes: &SweepAxes,
    scheme: RemapScheme,
) -> Result<RemapDatabase> {
    let grid = axes.grid(template)?;
    let rows = remapper.stability_scan(&grid, target_model, scheme);
    Ok(RemapDatabase::from_scan(rows, template.model(), target_model, scheme, axes.clone()))
}

impl RemapDatabase {
    /// Database from the rows of a scan over `axes`.
    pub fn from_scan(
        rows: Vec<ScanRow>,
        source_model: BrdfModel,
        target_model: BrdfModel,
        scheme: RemapScheme,
        axes: SweepAxes,
    ) -> Self {
        let rows = rows
            .into_iter()
            .map(|r| DbRow {
                source: r.source,
                l2: r.result.as_ref().map_or(f64::NAN, |x| x.l2),
                mean_ssim: r.result.as_ref().map_or(f64::NAN, |x| x.mean_ssim),
                target: r.result.map(|x| x.target_spec),
                flags: r.flags,
                error: r.error,
            })
            .collect();
        RemapDatabase {
            source_model,
            target_model,
            scheme,
            axes,
            rows,
        }
    }
}

/// Slope function `k(a) = c0 + c1 exp(-c2 a) + c3 exp(-c4 a^2)`.
pub fn slope_fn(c: &[f64; 5], a: f64) -> f64 {
    c[0] + c[1] * (-c[2] * a).exp() + c[3] * (-c[4] * a * a).exp()
}

/// Horner evaluation, coefficients in increasing degree.
pub fn poly_eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    fn of(values: impl IntoIterator<Item = f64>) -> Range {
        let mut r = Range {
            lo: f64::INFINITY,
            hi: f64::NEG_INFINITY,
        };
        for v in values {
            r.lo = r.lo.min(v);
            r.hi = r.hi.max(v);
        }
        r
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub roughness: Range,
    pub specular: Range,
    pub diffuse: Range,
}

/// How the diffuse map of a channel was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiffuseFit {
    Affine,
    /// Inputs did not vary; fitted `gain` only.
    Proportional,
    /// Inputs were all zero; identity.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub gain: f64,
    pub offset: f64,
    pub fit: DiffuseFit,
}

impl AffineMap {
    pub const IDENTITY: AffineMap = AffineMap {
        gain: 1.0,
        offset: 0.0,
        fit: DiffuseFit::Identity,
    };

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        self.gain * x + self.offset
    }
}

/// Specular fit of one roughness level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelFit {
    pub roughness: f64,
    pub rows: usize,
    /// Zero-intercept least-squares slope of `s2` against `s1`.
    pub slope: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResiduals {
    pub roughness_rms: f64,
    pub slope_rms: f64,
    pub specular_rms: f64,
    pub diffuse_rms: [f64; 3],
    pub levels: Vec<LevelFit>,
    pub dropped_levels: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformModel {
    pub source_model: BrdfModel,
    pub target_model: BrdfModel,
    /// Coefficients in increasing degree.
    pub roughness_poly: Vec<f64>,
    /// `c0..c4` of the slope function.
    pub slope: [f64; 5],
    pub diffuse: [AffineMap; 3],
    pub domain: Domain,
    pub residuals: Option<FitResiduals>,
}

/// Raw target parameters; specular and diffuse are not clamped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MappedParams {
    pub diffuse: Rgb,
    pub specular: Rgb,
    pub roughness: f64,
    /// An input lay outside the fitted domain and was extrapolated.
    pub extrapolated: bool,
}

impl MappedParams {
    /// Spec of `model` with every value clamped into its bounds; returns the
    /// number of values that had to be clamped.
    pub fn to_spec(&self, model: BrdfModel) -> Result<(BrdfSpec, usize)> {
        let mut spec = BrdfSpec::new(model);
        let (lo, hi) = spec.bounds();
        let mut values = spec.values();
        let mut set = |name: &str, v: f64| {
            if let Some(i) = spec.index_of(name) {
                values[i] = v;
            }
        };
        for c in 0..3 {
            set(crate::brdf::DIFFUSE_NAMES[c], self.diffuse[c]);
            set(crate::brdf::SPECULAR_NAMES[c], self.specular[c]);
        }
        set(crate::brdf::ROUGHNESS, self.roughness);
        let clamped = values
            .iter()
            .zip(lo.iter().zip(&hi))
            .filter(|(v, (l, h))| **v < **l || **v > **h)
            .count();
        spec.set_values_clamped(&values);
        Ok((spec, clamped))
    }
}

/// Anything that maps source parameters to target parameters.
pub trait ParamTransform: Sync {
    fn source_model(&self) -> BrdfModel;
    fn target_model(&self) -> BrdfModel;
    /// `diffuse`, `specular` (reflectance or F0) and `roughness` of a source
    /// material to target parameters.
    fn map(&self, diffuse: Rgb, specular: Rgb, roughness: f64) -> MappedParams;

    /// Applies the transform to a spec of the source model.
    fn apply(&self, source: &BrdfSpec) -> Result<MappedParams> {
        if source.model() != self.source_model() {
            return Err(Error::Config(format!(
                "transform expects {} parameters, got {}",
                self.source_model(),
                source.model()
            )));
        }
        let m = source.material()?;
        Ok(self.map(m.diffuse, m.specular, m.roughness))
    }
}

impl TransformModel {
    /// Maps a model onto itself unchanged.
    pub fn identity(model: BrdfModel) -> Self {
        TransformModel {
            source_model: model,
            target_model: model,
            roughness_poly: vec![0.0, 1.0],
            slope: [1.0, 0.0, 0.0, 0.0, 0.0],
            diffuse: [AffineMap::IDENTITY; 3],
            domain: Domain {
                roughness: Range {
                    lo: MIN_ROUGHNESS,
                    hi: MAX_ROUGHNESS,
                },
                specular: Range { lo: 0.0, hi: 1.0 },
                diffuse: Range { lo: 0.0, hi: 1.0 },
            },
            residuals: None,
        }
    }

    /// Target roughness, clamped into the admissible range.
    #[inline]
    pub fn roughness(&self, a1: f64) -> f64 {
        poly_eval(&self.roughness_poly, a1).clamp(MIN_ROUGHNESS, MAX_ROUGHNESS)
    }

    #[inline]
    pub fn k(&self, a1: f64) -> f64 {
        slope_fn(&self.slope, a1)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = TransformDocument {
            format: FORMAT_NAME.into(),
            version: FORMAT_VERSION,
            transforms: vec![self.clone()],
        };
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mut chain = ChainedTransform::from_json(s)?;
        if chain.transforms.len() != 1 {
            return Err(Error::Format(format!(
                "expected one transform, found {}",
                chain.transforms.len()
            )));
        }
        Ok(chain.transforms.remove(0))
    }
}

impl ParamTransform for TransformModel {
    fn source_model(&self) -> BrdfModel {
        self.source_model
    }

    fn target_model(&self) -> BrdfModel {
        self.target_model
    }

    #[inline]
    fn map(&self, diffuse: Rgb, specular: Rgb, a1: f64) -> MappedParams {
        let k = self.k(a1);
        let dom = &self.domain;
        let extrapolated = !dom.roughness.contains(a1)
            || specular.iter().any(|s| !dom.specular.contains(*s))
            || diffuse.iter().any(|d| !dom.diffuse.contains(*d));
        MappedParams {
            diffuse: [0, 1, 2].map(|c| self.diffuse[c].apply(diffuse[c])),
            specular: specular.map(|s| k * s),
            roughness: self.roughness(a1),
            extrapolated,
        }
    }
}

pub fn apply_transform(t: &TransformModel, source: &BrdfSpec) -> Result<MappedParams> {
    t.apply(source)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TransformDocument {
    format: String,
    version: u32,
    transforms: Vec<TransformModel>,
}

/// Transforms applied in sequence; adjacent model pairs must agree.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainedTransform {
    transforms: Vec<TransformModel>,
}

pub fn chain(transforms: Vec<TransformModel>) -> Result<ChainedTransform> {
    ChainedTransform::new(transforms)
}

impl ChainedTransform {
    pub fn new(transforms: Vec<TransformModel>) -> Result<Self> {
        if transforms.is_empty() {
            return Err(Error::Composition("empty chain".into()));
        }
        for w in transforms.windows(2) {
            if w[0].target_model != w[1].source_model {
                return Err(Error::Composition(format!(
                    "{} -> {} cannot be followed by {} -> {}",
                    w[0].source_model, w[0].target_model, w[1].source_model, w[1].target_model
                )));
            }
        }
        Ok(ChainedTransform { transforms })
    }

    pub fn transforms(&self) -> &[TransformModel] {
        &self.transforms
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = TransformDocument {
            format: FORMAT_NAME.into(),
            version: FORMAT_VERSION,
            transforms: self.transforms.clone(),
        };
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Format(e.to_string()))
    }

    /// Reads a transform document holding one or more transforms.
    pub fn from_json(s: &str) -> Result<Self> {
        let doc: TransformDocument = serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))?;
        if doc.format != FORMAT_NAME {
            return Err(Error::Format(format!("not a transform document: '{}'", doc.format)));
        }
        if doc.version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported transform version {} (expected {FORMAT_VERSION})",
                doc.version
            )));
        }
        for t in &doc.transforms {
            if t.roughness_poly.len() > MAX_POLY_DEGREE + 1 || t.roughness_poly.is_empty() {
                return Err(Error::Format("roughness polynomial must have 1 to 5 coefficients".into()));
            }
        }
        ChainedTransform::new(doc.transforms)
    }
}

impl ParamTransform for ChainedTransform {
    fn source_model(&self) -> BrdfModel {
        self.transforms[0].source_model
    }

    fn target_model(&self) -> BrdfModel {
        self.transforms[self.transforms.len() - 1].target_model
    }

    fn map(&self, diffuse: Rgb, specular: Rgb, roughness: f64) -> MappedParams {
        let mut p = MappedParams {
            diffuse,
            specular,
            roughness,
            extrapolated: false,
        };
        for t in &self.transforms {
            let q = t.map(p.diffuse, p.specular, p.roughness);
            p = MappedParams {
                extrapolated: p.extrapolated || q.extrapolated,
                ..q
            };
        }
        p
    }
}

/// One usable database sample, reduced to the quantities the fits need.
struct Sample {
    a1: f64,
    a2: f64,
    s1: Rgb,
    s2: Rgb,
    d1: Rgb,
    d2: Rgb,
}

fn sample_of(row: &DbRow) -> Result<Sample> {
    let src = row.source.material()?;
    let tgt = row.target.as_ref().expect("clean row has a target").material()?;
    Ok(Sample {
        a1: src.roughness,
        a2: tgt.roughness,
        s1: src.specular,
        s2: tgt.specular,
        d1: src.diffuse,
        d2: tgt.diffuse,
    })
}

/// Clean samples grouped by source roughness, after dropping levels with too
/// few clean rows or too few distinct specular inputs.
fn usable_levels(db: &RemapDatabase) -> Result<(Vec<(f64, Vec<Sample>)>, Vec<f64>)> {
    if !db.source_model.has_specular() || !db.target_model.has_specular() {
        return Err(Error::Config(format!(
            "transforms need specular terms on both sides ({} -> {})",
            db.source_model, db.target_model
        )));
    }
    let mut groups: BTreeMap<u64, (f64, usize, Vec<&DbRow>)> = BTreeMap::new();
    for row in &db.rows {
        let a = row.source.roughness().unwrap_or(f64::NAN);
        let e = groups.entry(a.to_bits()).or_insert((a, 0, Vec::new()));
        e.1 += 1;
        if row.is_clean() {
            e.2.push(row);
        }
    }
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut lacking_specular = 0;
    for (_, (a, total, clean)) in groups {
        if (clean.len() as f64) < MIN_CLEAN_FRACTION * total as f64 {
            dropped.push(a);
            continue;
        }
        let samples = clean.into_iter().map(sample_of).collect::<Result<Vec<_>>>()?;
        let mut distinct: Vec<u64> = samples.iter().map(|s| s.s1[0].to_bits()).collect();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() < MIN_SPECULAR_PER_LEVEL {
            lacking_specular += 1;
            dropped.push(a);
            continue;
        }
        kept.push((a, samples));
    }
    if kept.len() < MIN_ROUGHNESS_LEVELS {
        let axis = if kept.len() + lacking_specular >= MIN_ROUGHNESS_LEVELS {
            "specular"
        } else {
            "roughness"
        };
        return Err(Error::InsufficientData {
            axis: axis.into(),
            message: format!(
                "{} usable roughness levels after filtering, need {MIN_ROUGHNESS_LEVELS} with at least {MIN_SPECULAR_PER_LEVEL} specular values each",
                kept.len()
            ),
        });
    }
    Ok((kept, dropped))
}

/// Least-squares polynomial of the given degree, coefficients in increasing degree.
pub fn fit_polynomial(x: &[f64], y: &[f64], degree: usize) -> Result<Vec<f64>> {
    let n = x.len();
    if n <= degree {
        return Err(Error::InsufficientData {
            axis: "roughness".into(),
            message: format!("{n} points cannot determine a degree {degree} polynomial"),
        });
    }
    let a = DMatrix::from_fn(n, degree + 1, |i, j| x[i].powi(j as i32));
    let b = DVector::from_column_slice(y);
    let c = a
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| Error::Domain(format!("polynomial fit failed: {e}")))?;
    Ok(c.iter().copied().collect())
}

fn rms(v: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for x in v {
        s += x * x;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        (s / n as f64).sqrt()
    }
}

/// Zero-intercept slope of `y` on `x`, and the coefficient of determination.
fn origin_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let k = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let mean = y.iter().sum::<f64>() / y.len().max(1) as f64;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - k * a).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|b| (b - mean).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    (k, r2)
}

/// Fits `k(a)` to `(alpha, k_hat)` pairs. The linear coefficients
/// `c0, c1, c3` are eliminated (solved exactly for given decay rates), the
/// decay rates `c2, c4` are fitted from each seed on that reduced problem,
/// and all five are then refined jointly. The lowest-residual fit wins.
pub fn fit_slope_function(alpha: &[f64], k_hat: &[f64]) -> Result<([f64; 5], f64)> {
    let residual = |c: &[f64]| -> Vec<f64> {
        let c = [c[0], c[1], c[2], c[3], c[4]];
        alpha.iter().zip(k_hat).map(|(&a, &k)| slope_fn(&c, a) - k).collect()
    };
    let linear = |c2: f64, c4: f64| -> [f64; 3] {
        let a = DMatrix::from_fn(alpha.len(), 3, |i, j| match j {
            0 => 1.0,
            1 => (-c2 * alpha[i]).exp(),
            _ => (-c4 * alpha[i] * alpha[i]).exp(),
        });
        match a.svd(true, true).solve(&DVector::from_column_slice(k_hat), 1e-14) {
            Ok(l) => [l[0], l[1], l[2]],
            Err(_) => [f64::NAN; 3],
        }
    };
    let full = |d: &[f64]| {
        let l = linear(d[0], d[1]);
        [l[0], l[1], d[0], l[2], d[1]]
    };
    let reduced = |d: &[f64]| residual(&full(d));

    let inf = f64::INFINITY;
    let lower = vec![-inf, -inf, 0.0, -inf, 0.0];
    let upper = vec![inf, inf, MAX_DECAY, inf, MAX_DECAY];
    let optimizer_err = |e: Error| Error::Optimizer {
        stage: 3,
        message: e.to_string(),
    };
    let mut best: Option<([f64; 5], f64)> = None;
    for (c2, c4) in SLOPE_SEEDS {
        let mut decay = OptimizationProblem::new(vec![c2, c4], vec![0.0; 2], vec![MAX_DECAY; 2]).with_max_evals(1000);
        decay.tolerances.cost = 1e-14;
        decay.tolerances.step = 1e-12;
        let out = optim::minimize(&decay, reduced).map_err(optimizer_err)?;
        let x0 = full(&out.x_final);
        if x0.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let mut joint = OptimizationProblem::new(x0.to_vec(), lower.clone(), upper.clone()).with_max_evals(1000);
        joint.tolerances.cost = 1e-14;
        joint.tolerances.step = 1e-12;
        let out = optim::minimize(&joint, residual).map_err(optimizer_err)?;
        let c = [out.x_final[0], out.x_final[1], out.x_final[2], out.x_final[3], out.x_final[4]];
        let r = rms(residual(&c));
        if best.is_none_or(|b| r < b.1) {
            best = Some((c, r));
        }
    }
    best.ok_or_else(|| Error::Domain("no slope seed gave a finite fit".into()))
}

fn fit_affine(x: &[f64], y: &[f64]) -> AffineMap {
    let n = x.len() as f64;
    if x.is_empty() {
        return AffineMap::IDENTITY;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx > 1e-12 * (1.0 + mx * mx) * n {
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let gain = sxy / sxx;
        return AffineMap {
            gain,
            offset: my - gain * mx,
            fit: DiffuseFit::Affine,
        };
    }
    let s2: f64 = x.iter().map(|v| v * v).sum();
    if s2 > 0.0 {
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        return AffineMap {
            gain: sxy / s2,
            offset: 0.0,
            fit: DiffuseFit::Proportional,
        };
    }
    AffineMap::IDENTITY
}

/// Condenses a database into a [`TransformModel`]. Flagged rows are
/// ignored; see [`MIN_CLEAN_FRACTION`] and friends for the data needed.
pub fn fit_transform(db: &RemapDatabase) -> Result<TransformModel> {
    let (levels, dropped) = usable_levels(db)?;
    let samples: Vec<&Sample> = levels.iter().flat_map(|(_, s)| s).collect();

    let a1: Vec<f64> = samples.iter().map(|s| s.a1).collect();
    let a2: Vec<f64> = samples.iter().map(|s| s.a2).collect();
    let degree = MAX_POLY_DEGREE.min(levels.len() - 1);
    let poly = fit_polynomial(&a1, &a2, degree)?;
    let roughness_rms = rms(a1.iter().zip(&a2).map(|(x, y)| poly_eval(&poly, *x) - y));

    let mut level_fits = Vec::with_capacity(levels.len());
    for (a, rows) in &levels {
        let x: Vec<f64> = rows.iter().flat_map(|s| s.s1).collect();
        let y: Vec<f64> = rows.iter().flat_map(|s| s.s2).collect();
        let (slope, r2) = origin_slope(&x, &y);
        level_fits.push(LevelFit {
            roughness: *a,
            rows: rows.len(),
            slope,
            r2,
        });
    }
    let alphas: Vec<f64> = level_fits.iter().map(|l| l.roughness).collect();
    let k_hat: Vec<f64> = level_fits.iter().map(|l| l.slope).collect();
    let (slope, slope_rms) = fit_slope_function(&alphas, &k_hat)?;
    let specular_rms = rms(samples
        .iter()
        .flat_map(|s| (0..3).map(move |c| slope_fn(&slope, s.a1) * s.s1[c] - s.s2[c])));

    let mut diffuse = [AffineMap::IDENTITY; 3];
    let mut diffuse_rms = [0.0; 3];
    for c in 0..3 {
        let x: Vec<f64> = samples.iter().map(|s| s.d1[c]).collect();
        let y: Vec<f64> = samples.iter().map(|s| s.d2[c]).collect();
        diffuse[c] = fit_affine(&x, &y);
        diffuse_rms[c] = rms(x.iter().zip(&y).map(|(a, b)| diffuse[c].apply(*a) - b));
    }

    let domain = Domain {
        roughness: Range::of(a1.iter().copied()),
        specular: Range::of(samples.iter().flat_map(|s| s.s1)),
        diffuse: Range::of(samples.iter().flat_map(|s| s.d1)),
    };
    Ok(TransformModel {
        source_model: db.source_model,
        target_model: db.target_model,
        roughness_poly: poly,
        slope,
        diffuse,
        domain,
        residuals: Some(FitResiduals {
            roughness_rms,
            slope_rms,
            specular_rms,
            diffuse_rms,
            levels: level_fits,
            dropped_levels: dropped,
        }),
    })
}

/// Writes `alpha,k_hat,k_fit` for every fitted roughness level.
pub fn write_slope_csv<W: Write>(t: &TransformModel, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["alpha", "k_hat", "k_fit"]).map_err(csv_err)?;
    if let Some(res) = &t.residuals {
        for l in &res.levels {
            w.write_record([l.roughness.to_string(), l.slope.to_string(), t.k(l.roughness).to_string()])
                .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

/// Writes `samples` evenly spaced points of the roughness curve and the
/// slope function over `[0, 1]` as `alpha1,alpha2,k`.
pub fn write_curve_csv<W: Write>(t: &TransformModel, samples: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["alpha1", "alpha2", "k"]).map_err(csv_err)?;
    let n = samples.max(2);
    for i in 0..n {
        let a = i as f64 / (n - 1) as f64;
        w.write_record([a.to_string(), t.roughness(a).to_string(), t.k(a).to_string()])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

/// RBF kernel ridge regression on standardized inputs:
/// `f(x) = mean + sum_i w_i exp(-gamma |z(x) - z_i|^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelRidge {
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub support: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub output_mean: f64,
    pub gamma: f64,
    pub lambda: f64,
}

impl KernelRidge {
    /// Fits on `(x, y)` pairs; repeated inputs are averaged first.
    pub fn fit(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::InsufficientData {
                axis: "samples".into(),
                message: "kernel regression needs matching, non-empty inputs and outputs".into(),
            });
        }
        let dim = x[0].len();
        let mut uniq: BTreeMap<Vec<u64>, (Vec<f64>, f64, usize)> = BTreeMap::new();
        for (xi, yi) in x.iter().zip(y) {
            let key = xi.iter().map(|v| v.to_bits()).collect();
            let e = uniq.entry(key).or_insert((xi.clone(), 0.0, 0));
            e.1 += yi;
            e.2 += 1;
        }
        let pts: Vec<(Vec<f64>, f64)> = uniq.into_values().map(|(p, s, n)| (p, s / n as f64)).collect();
        let n = pts.len();

        let input_mean: Vec<f64> = (0..dim).map(|d| pts.iter().map(|p| p.0[d]).sum::<f64>() / n as f64).collect();
        let input_std: Vec<f64> = (0..dim)
            .map(|d| {
                let v = pts.iter().map(|p| (p.0[d] - input_mean[d]).powi(2)).sum::<f64>() / n as f64;
                if v > 0.0 {
                    v.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let support: Vec<Vec<f64>> = pts
            .iter()
            .map(|p| (0..dim).map(|d| (p.0[d] - input_mean[d]) / input_std[d]).collect())
            .collect();
        let output_mean = pts.iter().map(|p| p.1).sum::<f64>() / n as f64;

        let mut d2 = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                d2.push(sq_dist(&support[i], &support[j]));
            }
        }
        d2.sort_by(f64::total_cmp);
        let med = if d2.is_empty() { 1.0 } else { d2[d2.len() / 2] };
        let gamma = if med > 0.0 { 0.5 / med } else { 1.0 };

        let k = DMatrix::from_fn(n, n, |i, j| (-gamma * sq_dist(&support[i], &support[j])).exp());
        let b = DVector::from_iterator(n, pts.iter().map(|p| p.1 - output_mean));
        let mut lambda = lambda;
        for _ in 0..20 {
            let mut a = k.clone();
            for i in 0..n {
                a[(i, i)] += lambda;
            }
            if let Some(ch) = a.cholesky() {
                let w = ch.solve(&b);
                return Ok(KernelRidge {
                    input_mean,
                    input_std,
                    support,
                    weights: w.iter().copied().collect(),
                    output_mean,
                    gamma,
                    lambda,
                });
            }
            log::warn!("kernel system not positive definite at lambda = {lambda:e}; increasing ridge");
            lambda *= 10.0;
        }
        Err(Error::Domain("kernel system stayed singular".into()))
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let z: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(d, v)| (v - self.input_mean[d]) / self.input_std[d])
            .collect();
        self.output_mean
            + self
                .support
                .iter()
                .zip(&self.weights)
                .map(|(s, w)| w * (-self.gamma * sq_dist(s, &z)).exp())
                .sum::<f64>()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Kernel baseline: roughness from `a1`, each specular channel from
/// `(a1, s1_c)`, each diffuse channel from `d1_c`. Channels share one
/// regressor per quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelRegressor {
    pub source_model: BrdfModel,
    pub target_model: BrdfModel,
    pub roughness: KernelRidge,
    pub specular: KernelRidge,
    pub diffuse: KernelRidge,
}

pub fn fit_kernel_baseline(db: &RemapDatabase) -> Result<KernelRegressor> {
    let (levels, _) = usable_levels(db)?;
    let samples: Vec<&Sample> = levels.iter().flat_map(|(_, s)| s).collect();
    let rx: Vec<Vec<f64>> = samples.iter().map(|s| vec![s.a1]).collect();
    let ry: Vec<f64> = samples.iter().map(|s| s.a2).collect();
    let mut sx = Vec::new();
    let mut sy = Vec::new();
    let mut dx = Vec::new();
    let mut dy = Vec::new();
    for s in &samples {
        for c in 0..3 {
            sx.push(vec![s.a1, s.s1[c]]);
            sy.push(s.s2[c]);
            dx.push(vec![s.d1[c]]);
            dy.push(s.d2[c]);
        }
    }
    Ok(KernelRegressor {
        source_model: db.source_model,
        target_model: db.target_model,
        roughness: KernelRidge::fit(&rx, &ry, KERNEL_RIDGE)?,
        specular: KernelRidge::fit(&sx, &sy, KERNEL_RIDGE)?,
        diffuse: KernelRidge::fit(&dx, &dy, KERNEL_RIDGE)?,
    })
}

impl ParamTransform for KernelRegressor {
    fn source_model(&self) -> BrdfModel {
        self.source_model
    }

    fn target_model(&self) -> BrdfModel {
        self.target_model
    }

    fn map(&self, diffuse: Rgb, specular: Rgb, a1: f64) -> MappedParams {
        MappedParams {
            diffuse: diffuse.map(|d| self.diffuse.predict(&[d])),
            specular: specular.map(|s| self.specular.predict(&[a1, s])),
            roughness: self.roughness.predict(&[a1]).clamp(MIN_ROUGHNESS, MAX_ROUGHNESS),
            extrapolated: false,
        }
    }
}

pub fn apply_kernel(kr: &KernelRegressor, source: &BrdfSpec) -> Result<MappedParams> {
    kr.apply(source)
}
