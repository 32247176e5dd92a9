//! Uniform-material remapping between BRDF models.
//!
//! The source material is rendered once per needed pass; target parameters
//! are then fitted by the black-box optimizer against those renders. Three
//! schemes are available:
//!
//! * `Simple`: one joint fit of every target parameter against the full render.
//! * `TwoStage`: diffuse parameters against the diffuse-only render, then
//!   specular parameters (strength and roughness) against the specular-only
//!   render.
//! * `ThreeStage`: the two-stage result seeds a final joint full-render fit.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brdf::{BrdfModel, BrdfSpec, Material, Pass, Term, DIFFUSE_NAMES, IOR_K_NAMES, IOR_N_NAMES, ROUGHNESS, SPECULAR_NAMES};
use crate::error::{Error, Result};
use crate::image::RenderedImage;
use crate::imgmetric::{self, residual_into};
use crate::optim::{self, cost_of, OptimizationOutcome, OptimizationProblem, Termination, Tolerances};
use crate::render::{Renderer, SceneConfig};

/// A Ward-B specular value at or above this is treated as saturated by the
/// albedo trimming, where appearance no longer depends on the parameter.
pub const WARD_TRIM_SATURATION: f64 = 1.0 - 1e-3;
/// Relative distance from a bound that counts as sitting on it.
pub const BOUND_TOLERANCE: f64 = 1e-6;
/// A jump between successive sweep rows is a discontinuity when it exceeds
/// this multiple of the median step.
pub const JUMP_FACTOR: f64 = 10.0;
/// Steps below this fraction of the column's magnitude never count as jumps.
pub const JUMP_FLOOR: f64 = 1e-4;
pub const LOCAL_MIN_SSIM: f64 = 0.95;
pub const GOOD_NEIGHBOR_SSIM: f64 = 0.99;
/// Floor of the relative-error denominator in round trips.
pub const ROUND_TRIP_EPS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RemapScheme {
    Simple,
    TwoStage,
    ThreeStage,
}

impl RemapScheme {
    pub fn name(self) -> &'static str {
        match self {
            RemapScheme::Simple => "simple",
            RemapScheme::TwoStage => "two-stage",
            RemapScheme::ThreeStage => "three-stage",
        }
    }

    pub fn stage_count(self) -> usize {
        match self {
            RemapScheme::Simple => 1,
            RemapScheme::TwoStage => 2,
            RemapScheme::ThreeStage => 3,
        }
    }
}

impl fmt::Display for RemapScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RemapScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "simple" | "1" => Ok(RemapScheme::Simple),
            "two-stage" | "twostage" | "2" => Ok(RemapScheme::TwoStage),
            "three-stage" | "threestage" | "3" => Ok(RemapScheme::ThreeStage),
            _ => Err(Error::Config(format!("unknown remapping scheme '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StabilityFlags {
    /// A fitted parameter ended on a bound (positive lower bounds, upper
    /// bounds, or a saturated Ward-B specular).
    pub hit_bound: bool,
    /// Poor final match although a neighboring sweep point matched well.
    pub suspected_local_minimum: bool,
    /// A fitted parameter jumped relative to the previous sweep point.
    pub discontinuity: bool,
    /// The source has energy in a pass the target model cannot produce.
    pub unmatched_pass: bool,
}

impl StabilityFlags {
    pub fn any(&self) -> bool {
        self.hit_bound || self.suspected_local_minimum || self.discontinuity || self.unmatched_pass
    }

    pub fn union(self, o: StabilityFlags) -> StabilityFlags {
        StabilityFlags {
            hit_bound: self.hit_bound || o.hit_bound,
            suspected_local_minimum: self.suspected_local_minimum || o.suspected_local_minimum,
            discontinuity: self.discontinuity || o.discontinuity,
            unmatched_pass: self.unmatched_pass || o.unmatched_pass,
        }
    }

    /// Names of the raised flags.
    pub fn labels(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        if self.hit_bound {
            v.push("hit_bound");
        }
        if self.suspected_local_minimum {
            v.push("suspected_local_minimum");
        }
        if self.discontinuity {
            v.push("discontinuity");
        }
        if self.unmatched_pass {
            v.push("unmatched_pass");
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub pass: Pass,
    /// Names of the parameters optimized in this stage.
    pub free: Vec<String>,
    pub outcome: OptimizationOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemapResult {
    pub scheme: RemapScheme,
    pub target_spec: BrdfSpec,
    pub stages: Vec<StageReport>,
    /// Full-pass L2 distance between source and target renders.
    pub l2: f64,
    /// Full-pass mean SSIM between source and target renders.
    pub mean_ssim: f64,
    pub flags: StabilityFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemapOptions {
    pub max_evals: usize,
    pub tolerances: Tolerances,
    /// Multiplier on the light intensity for target renders, as returned by
    /// [`irradiance_match`](crate::render::irradiance_match). Both models are
    /// rendered by the same renderer here, so the default is 1.
    pub light_scale: f64,
}

impl Default for RemapOptions {
    fn default() -> Self {
        RemapOptions {
            max_evals: OptimizationProblem::DEFAULT_MAX_EVALS,
            tolerances: Tolerances::default(),
            light_scale: 1.0,
        }
    }
}

/// Source and target renders of a finished remap.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub source: RenderedImage,
    pub target: RenderedImage,
    pub report: imgmetric::DissimilarityReport,
}

/// Remapping engine bound to one scene.
#[derive(Debug, Clone)]
pub struct Remapper {
    renderer: Renderer,
    options: RemapOptions,
}

struct SourceRenders {
    full: Option<RenderedImage>,
    diffuse: Option<RenderedImage>,
    specular: Option<RenderedImage>,
}

impl Remapper {
    pub fn new(scene: &SceneConfig) -> Result<Self> {
        Self::with_options(scene, RemapOptions::default())
    }

    pub fn with_options(scene: &SceneConfig, options: RemapOptions) -> Result<Self> {
        if !(options.light_scale.is_finite() && options.light_scale > 0.0) {
            return Err(Error::Config(format!(
                "light scale must be positive, got {}",
                options.light_scale
            )));
        }
        Ok(Remapper {
            renderer: Renderer::new(scene)?,
            options,
        })
    }

    pub fn renderer(&self) -> &Renderer {
        &self.renderer
    }

    pub fn options(&self) -> &RemapOptions {
        &self.options
    }

    /// Fits `target_model` to the appearance of `source`. `x0` overrides the
    /// heuristic starting point and must be a reflectance-form spec of the
    /// target model.
    pub fn remap(
        &self,
        source: &BrdfSpec,
        target_model: BrdfModel,
        scheme: RemapScheme,
        x0: Option<&BrdfSpec>,
    ) -> Result<RemapResult> {
        let src = source.material()?;
        let mut target = match x0 {
            Some(seed) => {
                if seed.model() != target_model || seed.form() != crate::brdf::SpecularForm::Reflectance {
                    return Err(Error::Config(format!(
                        "starting point must be a reflectance-form {target_model} spec"
                    )));
                }
                seed.validate()?;
                seed.clone()
            }
            None => heuristic_seed(source, target_model)?,
        };

        let needs_full = scheme != RemapScheme::TwoStage;
        let needs_split = scheme != RemapScheme::Simple;
        let renders = SourceRenders {
            full: needs_full.then(|| self.renderer.render_material(&src, Pass::Full)),
            diffuse: needs_split.then(|| self.renderer.render_material(&src, Pass::DiffuseOnly)),
            specular: needs_split.then(|| self.renderer.render_material(&src, Pass::SpecularOnly)),
        };

        let all: Vec<usize> = (0..target.len()).collect();
        let mut stages = Vec::with_capacity(scheme.stage_count());
        if needs_split {
            let diffuse = target.indices(Term::Diffuse);
            let specular = target.indices(Term::Specular);
            let r = renders.diffuse.as_ref().expect("diffuse render");
            stages.push(self.run_stage(1, Pass::DiffuseOnly, &mut target, &diffuse, r)?);
            let r = renders.specular.as_ref().expect("specular render");
            stages.push(self.run_stage(2, Pass::SpecularOnly, &mut target, &specular, r)?);
        }
        if needs_full {
            let r = renders.full.as_ref().expect("full render");
            stages.push(self.run_stage(stages.len() + 1, Pass::Full, &mut target, &all, r)?);
        }

        let cmp = self.compare(source, &target)?;
        let mut flags = StabilityFlags {
            hit_bound: hits_bound(&target),
            ..Default::default()
        };
        if !target_model.has_specular() {
            let spec = match &renders.specular {
                Some(img) => img.max_value(),
                None => self.renderer.render_material(&src, Pass::SpecularOnly).max_value(),
            };
            flags.unmatched_pass = spec > 0.0;
        }
        Ok(RemapResult {
            scheme,
            target_spec: target,
            stages,
            l2: cmp.report.l2,
            mean_ssim: cmp.report.mean_ssim,
            flags,
        })
    }

    /// Full-pass renders of both specs and their dissimilarity.
    pub fn compare(&self, source: &BrdfSpec, target: &BrdfSpec) -> Result<Comparison> {
        let s = self.renderer.render(source, Pass::Full)?;
        let t = self
            .renderer
            .render_material_scaled(&target.material()?, Pass::Full, self.options.light_scale);
        let report = imgmetric::ssim(&s, &t)?;
        Ok(Comparison {
            source: s,
            target: t,
            report,
        })
    }

    /// Optimizes the parameters at `free` against `reference`, writing the
    /// result back into `target`.
    fn run_stage(
        &self,
        stage: usize,
        pass: Pass,
        target: &mut BrdfSpec,
        free: &[usize],
        reference: &RenderedImage,
    ) -> Result<StageReport> {
        let base = target.values();
        let (lower, upper) = target.bounds();
        let scale = self.options.light_scale;
        let mut scratch = target.clone();
        let mut residual = |x: &[f64]| -> Vec<f64> {
            let mut v = base.clone();
            for (k, &i) in free.iter().enumerate() {
                v[i] = x[k];
            }
            scratch.set_values_clamped(&v);
            let m = material_of(&scratch);
            let img = self.renderer.render_material_scaled(&m, pass, scale);
            let mut r = Vec::with_capacity(3 * img.pixels.len());
            residual_into(&img, reference, &mut r);
            r
        };
        let names = free.iter().map(|&i| target.params()[i].name.clone()).collect();

        if free.is_empty() {
            let cost = cost_of(&residual(&[]));
            return Ok(StageReport {
                pass,
                free: names,
                outcome: OptimizationOutcome {
                    x_final: Vec::new(),
                    initial_cost: cost,
                    final_cost: cost,
                    n_evals: 1,
                    termination: Termination::GradTol,
                    converged: true,
                    trace: Vec::new(),
                },
            });
        }

        let mut problem = OptimizationProblem::new(
            free.iter().map(|&i| base[i]).collect(),
            free.iter().map(|&i| lower[i]).collect(),
            free.iter().map(|&i| upper[i]).collect(),
        )
        .with_max_evals(self.options.max_evals);
        problem.tolerances = self.options.tolerances;
        let outcome = optim::minimize(&problem, &mut residual).map_err(|e| Error::Optimizer {
            stage,
            message: e.to_string(),
        })?;
        let mut v = base;
        for (k, &i) in free.iter().enumerate() {
            v[i] = outcome.x_final[k];
        }
        target.set_values_clamped(&v);
        Ok(StageReport {
            pass,
            free: names,
            outcome,
        })
    }
}

/// Reflectance-form target spec values resolve without Fresnel conversion.
fn material_of(spec: &BrdfSpec) -> Material {
    spec.material().expect("clamped reflectance-form spec is valid")
}

/// Starting point when none is given: the source diffuse color, the source
/// roughness (or 0.3), and specular 0.5 clamped into the target's bounds.
pub fn heuristic_seed(source: &BrdfSpec, target_model: BrdfModel) -> Result<BrdfSpec> {
    let mut seed = BrdfSpec::new(target_model);
    let mut values = seed.values();
    let d = source.diffuse();
    for (c, name) in DIFFUSE_NAMES.iter().enumerate() {
        if let Some(i) = seed.index_of(name) {
            values[i] = d[c];
        }
    }
    if let Some(i) = seed.index_of(ROUGHNESS) {
        values[i] = source.roughness().unwrap_or(0.3);
    }
    for name in SPECULAR_NAMES {
        if let Some(i) = seed.index_of(name) {
            values[i] = 0.5;
        }
    }
    seed.set_values_clamped(&values);
    Ok(seed)
}

fn hits_bound(spec: &BrdfSpec) -> bool {
    let model = spec.model();
    spec.params().iter().any(|p| {
        let near = |b: f64| (p.value - b).abs() <= BOUND_TOLERANCE * b.abs().max(1.0);
        let at_upper = p.upper.is_finite() && near(p.upper);
        let at_lower = p.lower > 0.0 && near(p.lower);
        let saturated = model == BrdfModel::WardB
            && SPECULAR_NAMES.contains(&p.name.as_str())
            && p.value >= WARD_TRIM_SATURATION;
        at_upper || at_lower || saturated
    })
}

pub fn remap_uniform(
    source: &BrdfSpec,
    target_model: BrdfModel,
    scheme: RemapScheme,
    scene: &SceneConfig,
    x0: Option<&BrdfSpec>,
) -> Result<RemapResult> {
    Remapper::new(scene)?.remap(source, target_model, scheme, x0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrip {
    pub forward: RemapResult,
    pub backward: RemapResult,
    pub recovered: BrdfSpec,
    /// `|recovered - original| / max(|original|, ROUND_TRIP_EPS)` per
    /// parameter, with IOR sources compared through their reflectance.
    pub deviation: Vec<(String, f64)>,
    pub flags: StabilityFlags,
}

impl RoundTrip {
    pub fn max_deviation(&self) -> f64 {
        self.deviation.iter().map(|(_, d)| *d).fold(0.0, f64::max)
    }

    pub fn deviation_of(&self, name: &str) -> Option<f64> {
        self.deviation.iter().find(|(n, _)| n == name).map(|(_, d)| *d)
    }
}

impl Remapper {
    /// Remaps `source` to `intermediate` and back to the source model.
    pub fn round_trip(
        &self,
        source: &BrdfSpec,
        intermediate: BrdfModel,
        scheme: RemapScheme,
    ) -> Result<RoundTrip> {
        let original = source.to_reflectance_form()?;
        let forward = self.remap(source, intermediate, scheme, None)?;
        let backward = self.remap(&forward.target_spec, source.model(), scheme, None)?;
        let recovered = backward.target_spec.clone();
        let deviation = original
            .params()
            .iter()
            .zip(recovered.params())
            .map(|(o, r)| {
                let d = (r.value - o.value).abs() / o.value.abs().max(ROUND_TRIP_EPS);
                (o.name.clone(), d)
            })
            .collect();
        let flags = forward.flags.union(backward.flags);
        Ok(RoundTrip {
            forward,
            backward,
            recovered,
            deviation,
            flags,
        })
    }
}

pub fn round_trip(
    source: &BrdfSpec,
    intermediate: BrdfModel,
    scheme: RemapScheme,
    scene: &SceneConfig,
) -> Result<RoundTrip> {
    Remapper::new(scene)?.round_trip(source, intermediate, scheme)
}

/// Expands a short axis name to the parameter names it drives: `diffuse`,
/// `specular`, `ior_n` and `ior_k` set all three channels.
pub fn axis_targets(axis: &str) -> Vec<&str> {
    match axis {
        "diffuse" => DIFFUSE_NAMES.to_vec(),
        "specular" | "f0" => SPECULAR_NAMES.to_vec(),
        "ior_n" => IOR_N_NAMES.to_vec(),
        "ior_k" => IOR_K_NAMES.to_vec(),
        other => vec![other],
    }
}

/// Cartesian product of axis values applied to `template`, first axis
/// varying slowest.
pub fn sweep_grid(template: &BrdfSpec, axes: &[(String, Vec<f64>)]) -> Result<Vec<BrdfSpec>> {
    let mut grid = vec![template.clone()];
    for (axis, values) in axes {
        if values.is_empty() {
            return Err(Error::Config(format!("axis '{axis}' has no values")));
        }
        let names = axis_targets(axis);
        let mut next = Vec::with_capacity(grid.len() * values.len());
        for spec in &grid {
            for &v in values {
                let mut s = spec.clone();
                for n in &names {
                    s.set(n, v)?;
                }
                next.push(s);
            }
        }
        grid = next;
    }
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub source: BrdfSpec,
    pub result: Option<RemapResult>,
    pub error: Option<String>,
    /// Flags of the remap merged with those found by comparing rows.
    pub flags: StabilityFlags,
}

impl ScanRow {
    /// Usable for fitting: succeeded and raised no flag.
    pub fn is_clean(&self) -> bool {
        self.result.is_some() && !self.flags.any()
    }
}

impl Remapper {
    /// One remap per grid point, in parallel; rows come back in grid order.
    /// Failures are recorded per row and do not stop the scan.
    pub fn stability_scan(
        &self,
        grid: &[BrdfSpec],
        target_model: BrdfModel,
        scheme: RemapScheme,
    ) -> Vec<ScanRow> {
        let mut rows: Vec<ScanRow> = grid
            .par_iter()
            .map(|source| match self.remap(source, target_model, scheme, None) {
                Ok(r) => ScanRow {
                    source: source.clone(),
                    flags: r.flags,
                    result: Some(r),
                    error: None,
                },
                Err(e) => ScanRow {
                    source: source.clone(),
                    result: None,
                    error: Some(e.to_string()),
                    flags: StabilityFlags::default(),
                },
            })
            .collect();
        flag_discontinuities(&mut rows);
        flag_local_minima(&mut rows);
        rows
    }
}

pub fn stability_scan(
    grid: &[BrdfSpec],
    target_model: BrdfModel,
    scheme: RemapScheme,
    scene: &SceneConfig,
) -> Result<Vec<ScanRow>> {
    Ok(Remapper::new(scene)?.stability_scan(grid, target_model, scheme))
}

/// Marks rows whose fitted parameters jump by more than `JUMP_FACTOR` times
/// the median step. Steps are grouped by which single source parameter
/// changed between consecutive rows, so each sweep axis has its own median.
pub fn flag_discontinuities(rows: &mut [ScanRow]) {
    let values: Vec<Option<(Vec<f64>, Vec<f64>)>> = rows
        .iter()
        .map(|r| {
            let t = r.result.as_ref()?;
            Some((r.source.values(), t.target_spec.values()))
        })
        .collect();
    let Some(width) = values.iter().flatten().map(|(_, t)| t.len()).next() else {
        return;
    };
    let mut scale = vec![0.0f64; width];
    for (_, t) in values.iter().flatten() {
        for (s, v) in scale.iter_mut().zip(t) {
            *s = s.max(v.abs());
        }
    }

    // (row, axis, per-parameter step)
    let mut steps: Vec<(usize, String, Vec<f64>)> = Vec::new();
    for i in 1..values.len() {
        let (Some((sa, ta)), Some((sb, tb))) = (&values[i - 1], &values[i]) else {
            continue;
        };
        if sa.len() != sb.len() || ta.len() != tb.len() {
            continue;
        }
        // Channel triples swept together count as one axis.
        let mut changed = (0..sa.len())
            .filter(|&k| sa[k] != sb[k])
            .map(|k| channel_base(&rows[i].source.params()[k].name));
        let Some(axis) = changed.next() else { continue };
        if changed.any(|a| a != axis) {
            continue;
        }
        let d = ta.iter().zip(tb).map(|(a, b)| (a - b).abs()).collect();
        steps.push((i, axis.to_string(), d));
    }

    let mut axes: Vec<&str> = steps.iter().map(|s| s.1.as_str()).collect();
    axes.sort_unstable();
    axes.dedup();
    for axis in axes {
        let group: Vec<&(usize, String, Vec<f64>)> = steps.iter().filter(|s| s.1 == axis).collect();
        for p in 0..width {
            let col: Vec<f64> = group.iter().map(|s| s.2[p]).collect();
            let med = median(&col);
            let floor = JUMP_FLOOR * scale[p].max(1e-3);
            for s in &group {
                if s.2[p] > JUMP_FACTOR * med && s.2[p] > floor {
                    rows[s.0].flags.discontinuity = true;
                }
            }
        }
    }
}

/// Marks rows with a poor match next to a row that matched well. Neighbors
/// are the rows nearest in range-normalized source parameters (within 1.5x
/// the nearest distance).
pub fn flag_local_minima(rows: &mut [ScanRow]) {
    let n = rows.len();
    if n < 2 {
        return;
    }
    let src: Vec<Vec<f64>> = rows.iter().map(|r| r.source.values()).collect();
    let dim = src[0].len();
    if src.iter().any(|s| s.len() != dim) {
        return;
    }
    let range: Vec<f64> = (0..dim)
        .map(|k| {
            let lo = src.iter().map(|s| s[k]).fold(f64::INFINITY, f64::min);
            let hi = src.iter().map(|s| s[k]).fold(f64::NEG_INFINITY, f64::max);
            hi - lo
        })
        .collect();
    let dist = |a: &[f64], b: &[f64]| -> f64 {
        (0..dim)
            .filter(|&k| range[k] > 0.0)
            .map(|k| ((a[k] - b[k]) / range[k]).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let ssim: Vec<Option<f64>> = rows.iter().map(|r| r.result.as_ref().map(|x| x.mean_ssim)).collect();
    for i in 0..n {
        let Some(si) = ssim[i] else { continue };
        if si >= LOCAL_MIN_SSIM {
            continue;
        }
        let d: Vec<f64> = (0..n).map(|j| if j == i { f64::INFINITY } else { dist(&src[i], &src[j]) }).collect();
        let nearest = d.iter().copied().filter(|v| *v > 0.0).fold(f64::INFINITY, f64::min);
        if !nearest.is_finite() {
            continue;
        }
        let good = (0..n).any(|j| d[j] <= 1.5 * nearest && ssim[j].is_some_and(|s| s >= GOOD_NEIGHBOR_SSIM));
        if good {
            rows[i].flags.suspected_local_minimum = true;
        }
    }
}

fn channel_base(name: &str) -> &str {
    ["_r", "_g", "_b"]
        .iter()
        .find_map(|suffix| name.strip_suffix(suffix))
        .unwrap_or(name)
}

fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

/// Absolute second finite differences of a sampled curve.
pub fn second_differences(values: &[f64]) -> Vec<f64> {
    values.windows(3).map(|w| (w[2] - 2.0 * w[1] + w[0]).abs()).collect()
}

/// Whether the largest second difference stays within `factor` times the
/// median one. A noise floor of `1e-6` times the curve's range keeps exactly
/// linear curves (median zero) from failing on rounding.
pub fn is_smooth(values: &[f64], factor: f64) -> bool {
    let d2 = second_differences(values);
    if d2.is_empty() {
        return true;
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let max = d2.iter().copied().fold(0.0, f64::max);
    max <= factor * median(&d2) + 1e-6 * (hi - lo)
}

/// Writes a scan as CSV: row index, `src_*` and `dst_*` parameter columns,
/// l2, mean_ssim, one 0/1 column per flag and an error message column.
pub fn write_scan_csv<W: Write>(rows: &[ScanRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let src_names: Vec<String> = rows
        .first()
        .map(|r| r.source.params().iter().map(|p| p.name.clone()).collect())
        .unwrap_or_default();
    let dst_names: Vec<String> = rows
        .iter()
        .find_map(|r| r.result.as_ref())
        .map(|r| r.target_spec.params().iter().map(|p| p.name.clone()).collect())
        .unwrap_or_default();
    let mut header = vec!["row".to_string()];
    header.extend(src_names.iter().map(|n| format!("src_{n}")));
    header.extend(dst_names.iter().map(|n| format!("dst_{n}")));
    for h in ["l2", "mean_ssim", "hit_bound", "suspected_local_minimum", "discontinuity", "unmatched_pass", "error"] {
        header.push(h.to_string());
    }
    w.write_record(&header).map_err(csv_err)?;
    for (i, row) in rows.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(row.source.values().iter().map(|v| v.to_string()));
        match &row.result {
            Some(r) => {
                rec.extend(r.target_spec.values().iter().map(|v| v.to_string()));
                rec.push(r.l2.to_string());
                rec.push(r.mean_ssim.to_string());
            }
            None => rec.extend(std::iter::repeat_n(String::new(), dst_names.len() + 2)),
        }
        let f = row.flags;
        for b in [f.hit_bound, f.suspected_local_minimum, f.discontinuity, f.unmatched_pass] {
            rec.push(u8::from(b).to_string());
        }
        rec.push(row.error.clone().unwrap_or_default());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("CSV: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene() -> SceneConfig {
        SceneConfig::with_size(48)
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in [RemapScheme::Simple, RemapScheme::TwoStage, RemapScheme::ThreeStage] {
            assert_eq!(s.name().parse::<RemapScheme>().unwrap(), s);
        }
        assert!("four".parse::<RemapScheme>().is_err());
    }

    #[test]
    fn seed_copies_diffuse_and_roughness() {
        let src = BrdfSpec::from_components(BrdfModel::WardA, [0.1, 0.2, 0.3], [0.4; 3], 0.2).unwrap();
        let seed = heuristic_seed(&src, BrdfModel::Ggx).unwrap();
        assert_eq!(seed.diffuse(), [0.1, 0.2, 0.3]);
        assert_eq!(seed.roughness(), Some(0.2));
        assert_eq!(seed.get("specular_g"), Some(0.5));
        let lam = BrdfSpec::new(BrdfModel::Lambert);
        assert_eq!(heuristic_seed(&lam, BrdfModel::Ggx).unwrap().roughness(), Some(0.3));
    }

    #[test]
    fn stage_counts_follow_scheme() {
        let r = Remapper::new(&scene()).unwrap();
        let src = BrdfSpec::from_components(BrdfModel::Ggx, [0.3; 3], [0.2; 3], 0.3).unwrap();
        for s in [RemapScheme::Simple, RemapScheme::TwoStage, RemapScheme::ThreeStage] {
            let out = r.remap(&src, BrdfModel::Ggx, s, Some(&src)).unwrap();
            assert_eq!(out.stages.len(), s.stage_count());
        }
    }

    #[test]
    fn lambert_target_flags_unmatched_specular() {
        let r = Remapper::new(&scene()).unwrap();
        let src = BrdfSpec::from_components(BrdfModel::Ggx, [0.3; 3], [0.2; 3], 0.3).unwrap();
        let out = r.remap(&src, BrdfModel::Lambert, RemapScheme::TwoStage, None).unwrap();
        assert!(out.flags.unmatched_pass);
        assert_eq!(out.stages.len(), 2);
        assert!(out.stages[1].free.is_empty());
    }

    #[test]
    fn bad_seed_is_rejected() {
        let r = Remapper::new(&scene()).unwrap();
        let src = BrdfSpec::new(BrdfModel::Ggx);
        let seed = BrdfSpec::new(BrdfModel::WardA);
        assert!(r.remap(&src, BrdfModel::Ggx, RemapScheme::Simple, Some(&seed)).is_err());
    }

    #[test]
    fn bound_detection() {
        let mut s = BrdfSpec::from_components(BrdfModel::Ggx, [0.0; 3], [0.2; 3], 0.3).unwrap();
        assert!(!hits_bound(&s));
        s.set(ROUGHNESS, 1.0).unwrap();
        assert!(hits_bound(&s));
        s.set(ROUGHNESS, crate::brdf::MIN_ROUGHNESS).unwrap();
        assert!(hits_bound(&s));
        let w = BrdfSpec::from_components(BrdfModel::WardB, [0.0; 3], [1.2, 0.3, 0.3], 0.3).unwrap();
        assert!(hits_bound(&w));
        let a = BrdfSpec::from_components(BrdfModel::WardA, [0.0; 3], [1.2, 0.3, 0.3], 0.3).unwrap();
        assert!(!hits_bound(&a));
    }

    #[test]
    fn grid_is_cartesian_first_axis_slowest() {
        let t = BrdfSpec::new(BrdfModel::WardA);
        let g = sweep_grid(
            &t,
            &[
                (ROUGHNESS.to_string(), vec![0.1, 0.2]),
                ("specular".to_string(), vec![0.3, 0.4, 0.5]),
            ],
        )
        .unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g[1].roughness(), Some(0.1));
        assert_eq!(g[1].get("specular_b"), Some(0.4));
        assert_eq!(g[3].roughness(), Some(0.2));
        assert!(sweep_grid(&t, &[("bogus".to_string(), vec![1.0])]).is_err());
    }

    fn fake_rows(targets: &[f64], ssims: &[f64]) -> Vec<ScanRow> {
        targets
            .iter()
            .zip(ssims)
            .enumerate()
            .map(|(i, (&t, &q))| {
                let src = BrdfSpec::from_components(BrdfModel::WardA, [0.0; 3], [0.1 + 0.05 * i as f64; 3], 0.3).unwrap();
                let tgt = BrdfSpec::from_components(BrdfModel::WardA, [0.0; 3], [t; 3], 0.3).unwrap();
                ScanRow {
                    source: src,
                    result: Some(RemapResult {
                        scheme: RemapScheme::Simple,
                        target_spec: tgt,
                        stages: Vec::new(),
                        l2: 0.0,
                        mean_ssim: q,
                        flags: StabilityFlags::default(),
                    }),
                    error: None,
                    flags: StabilityFlags::default(),
                }
            })
            .collect()
    }

    #[test]
    fn jumps_are_flagged() {
        let t = [0.1, 0.11, 0.12, 0.5, 0.51, 0.52];
        let mut rows = fake_rows(&t, &[1.0; 6]);
        flag_discontinuities(&mut rows);
        let flagged: Vec<usize> = (0..6).filter(|&i| rows[i].flags.discontinuity).collect();
        assert_eq!(flagged, vec![3]);

        let mut smooth = fake_rows(&[0.1, 0.11, 0.12, 0.13, 0.14, 0.15], &[1.0; 6]);
        flag_discontinuities(&mut smooth);
        assert!(smooth.iter().all(|r| !r.flags.discontinuity));
    }

    #[test]
    fn poor_match_next_to_good_one_is_suspected() {
        let mut rows = fake_rows(&[0.1, 0.2, 0.3, 0.4], &[0.999, 0.9, 0.999, 0.999]);
        flag_local_minima(&mut rows);
        let flagged: Vec<usize> = (0..4).filter(|&i| rows[i].flags.suspected_local_minimum).collect();
        assert_eq!(flagged, vec![1]);
    }

    #[test]
    fn smoothness_check() {
        assert!(is_smooth(&[0.0, 1.0, 2.0, 3.0, 4.0], 10.0));
        assert!(is_smooth(&[0.0, 1.0, 4.0, 9.0, 16.0], 10.0));
        assert!(!is_smooth(&[0.0, 0.1, 0.2, 0.3, 5.0, 5.1, 5.2, 5.3], 10.0));
        assert_eq!(second_differences(&[1.0, 2.0, 4.0]), vec![1.0]);
    }

    #[test]
    fn scan_csv_shape() {
        let rows = fake_rows(&[0.1, 0.2], &[1.0, 1.0]);
        let mut buf = Vec::new();
        write_scan_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("row,src_diffuse_r"));
        assert!(lines[0].contains("dst_roughness,l2,mean_ssim,hit_bound"));
    }
}
