use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use brdfmap::brdf::{format_spec, parse_spec};
use brdfmap::image::{read_pfm, write_pfm, write_pfm_gray, write_png_false_color, write_png_srgb};
use brdfmap::imgmetric::{self, DissimilarityReport};
use brdfmap::remap::{sweep_grid, write_scan_csv, Remapper, StabilityFlags};
use brdfmap::svbrdf::{self, MapEncoding};
use brdfmap::xform::{self, ParamTransform, RemapDatabase, SweepAxes};
use brdfmap::{BrdfModel, BrdfSpec, ChainedTransform, LightConfig, LightMode, Pass, RemapScheme};
use clap::Args;
use serde::{Deserialize, Serialize};

use crate::config::{absolutize, absolutize_all, echo, layered, required, SceneArgs};
use crate::Status;

fn read_spec(path: &Path) -> Result<BrdfSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_spec(&text).with_context(|| path.display().to_string())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn csv_file(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

fn create_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn flags_status(flags: &StabilityFlags) -> Status {
    if flags.any() {
        Status::Flagged(flags.labels())
    } else {
        Status::Ok
    }
}

/// All given transform files composed in order; each file may itself hold a chain.
fn load_chain(paths: &[PathBuf]) -> Result<ChainedTransform> {
    let mut all = Vec::new();
    for p in paths {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let c = ChainedTransform::from_json(&text).with_context(|| p.display().to_string())?;
        all.extend(c.transforms().iter().cloned());
    }
    Ok(ChainedTransform::new(all)?)
}

fn parse_rgb(s: &str) -> Result<[f64; 3]> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| brdfmap::Error::Config(format!("bad colour '{s}', expected r,g,b")))?;
    match v.as_slice() {
        [x] => Ok([*x; 3]),
        [r, g, b] => Ok([*r, *g, *b]),
        _ => Err(brdfmap::Error::Config(format!("bad colour '{s}', expected r,g,b")).into()),
    }
}

fn parse_axis(s: &str) -> Result<(String, Vec<f64>)> {
    let bad = || brdfmap::Error::Config(format!("bad axis '{s}', expected name=v1,v2,..."));
    let (name, values) = s.split_once('=').ok_or_else(bad)?;
    let values = values
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| bad())?;
    Ok((name.trim().to_string(), values))
}

fn write_report_row<W: Write>(w: &mut csv::Writer<W>, r: &DissimilarityReport) -> Result<()> {
    w.write_record(["l2", "mean_ssim", "mean_dissimilarity"])?;
    w.write_record([r.l2.to_string(), r.mean_ssim.to_string(), r.mean_dissimilarity.to_string()])?;
    Ok(())
}

const FLAG_COLUMNS: [&str; 4] = ["hit_bound", "suspected_local_minimum", "discontinuity", "unmatched_pass"];

fn flag_values(f: &StabilityFlags) -> [String; 4] {
    [f.hit_bound, f.suspected_local_minimum, f.discontinuity, f.unmatched_pass].map(|b| u8::from(b).to_string())
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(deny_unknown_fields)]
pub struct RemapArgs {
    /// Source material spec file
    #[arg(long)]
    pub source: Option<PathBuf>,
    /// Target model name
    #[arg(long)]
    pub target: Option<String>,
    /// simple, two-stage or three-stage [default: two-stage]
    #[arg(long)]
    pub scheme: Option<String>,
    /// Reflectance-form spec of the target model to start the fit from
    #[arg(long)]
    pub start: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(default)]
    pub scene: SceneArgs,
}

pub fn cmd_remap(flags: &RemapArgs, cfg: Option<&Path>) -> Result<Status> {
    let mut a = layered(flags, cfg, "remap")?;
    a.scheme.get_or_insert_with(|| RemapScheme::TwoStage.name().into());
    a.scene.fill_defaults();
    absolutize(&mut a.source)?;
    absolutize(&mut a.start)?;
    absolutize(&mut a.out)?;

    let source = read_spec(required(&a.source, "source")?)?;
    let target: BrdfModel = required(&a.target, "target")?.parse()?;
    let scheme: RemapScheme = required(&a.scheme, "scheme")?.parse()?;
    let start = a.start.as_deref().map(read_spec).transpose()?;
    let out = required(&a.out, "out")?;

    let remapper = Remapper::with_options(&a.scene.scene()?, a.scene.options())?;
    let result = remapper.remap(&source, target, scheme, start.as_ref())?;
    let cmp = remapper.compare(&source, &result.target_spec)?;

    create_out(out)?;
    write_text(&out.join("target.brdf"), &format_spec(&result.target_spec))?;
    write_pfm(out.join("source.pfm"), &cmp.source)?;
    write_pfm(out.join("target.pfm"), &cmp.target)?;
    write_pfm_gray(out.join("ssim.pfm"), &cmp.report.ssim_map)?;
    write_png_false_color(out.join("ssim.png"), &cmp.report.ssim_map, 0.0, 1.0)?;

    let mut w = csv_file(&out.join("summary.csv"))?;
    let names: Vec<String> = result.target_spec.params().iter().map(|p| format!("dst_{}", p.name)).collect();
    let mut header: Vec<String> = ["source_model", "target_model", "scheme", "l2", "mean_ssim", "mean_dissimilarity", "evals", "final_cost"]
        .map(String::from)
        .to_vec();
    header.extend(FLAG_COLUMNS.map(String::from));
    header.extend(names);
    w.write_record(&header)?;
    let mut row = vec![
        source.model().name().to_string(),
        target.name().to_string(),
        scheme.name().to_string(),
        cmp.report.l2.to_string(),
        cmp.report.mean_ssim.to_string(),
        cmp.report.mean_dissimilarity.to_string(),
        result.stages.iter().map(|s| s.outcome.n_evals).sum::<usize>().to_string(),
        result.stages.last().map_or(0.0, |s| s.outcome.final_cost).to_string(),
    ];
    row.extend(flag_values(&result.flags));
    row.extend(result.target_spec.values().iter().map(|v| v.to_string()));
    w.write_record(&row)?;
    w.flush()?;

    let mut w = csv_file(&out.join("stages.csv"))?;
    w.write_record(["stage", "pass", "free", "initial_cost", "final_cost", "evals", "converged"])?;
    for (i, s) in result.stages.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            s.pass.name().to_string(),
            s.free.join(" "),
            s.outcome.initial_cost.to_string(),
            s.outcome.final_cost.to_string(),
            s.outcome.n_evals.to_string(),
            s.outcome.converged.to_string(),
        ])?;
    }
    w.flush()?;

    echo(&a, "remap", out)?;
    Ok(flags_status(&result.flags))
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepArgs {
    /// Template spec; swept parameters are overwritten, the rest kept
    #[arg(long)]
    pub source: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<String>,
    /// simple, two-stage or three-stage [default: two-stage]
    #[arg(long)]
    pub scheme: Option<String>,
    /// Generic axis `name=v1,v2,...`; repeat for a cartesian grid (first varies slowest)
    #[arg(long = "axis")]
    pub axes: Option<Vec<String>>,
    /// Roughness levels of a database sweep
    #[arg(long, value_delimiter = ',')]
    pub roughness: Option<Vec<f64>>,
    /// Specular values of a database sweep
    #[arg(long, value_delimiter = ',')]
    pub specular: Option<Vec<f64>>,
    /// Parameter driven by --specular: specular, ior_n, ior_k, ... [default: specular]
    #[arg(long)]
    pub specular_axis: Option<String>,
    /// Diffuse colour `r,g,b` for a roughness level, cycled over levels; repeatable
    #[arg(long = "diffuse-level")]
    pub diffuse_levels: Option<Vec<String>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(default)]
    pub scene: SceneArgs,
}

pub fn cmd_sweep(flags: &SweepArgs, cfg: Option<&Path>) -> Result<Status> {
    let mut a = layered(flags, cfg, "sweep")?;
    a.scheme.get_or_insert_with(|| RemapScheme::TwoStage.name().into());
    a.scene.fill_defaults();
    absolutize(&mut a.source)?;
    absolutize(&mut a.out)?;
    let database_mode = a.roughness.is_some() || a.specular.is_some();
    if database_mode {
        if a.axes.is_some() {
            return Err(brdfmap::Error::Config("--axis cannot be combined with --roughness/--specular".into()).into());
        }
        a.specular_axis.get_or_insert_with(|| "specular".into());
    }

    let template = read_spec(required(&a.source, "source")?)?;
    let target: BrdfModel = required(&a.target, "target")?.parse()?;
    let scheme: RemapScheme = required(&a.scheme, "scheme")?.parse()?;
    let out = required(&a.out, "out")?;

    let (grid, axes) = if database_mode {
        let mut axes = SweepAxes::new(required(&a.roughness, "roughness")?.clone(), required(&a.specular, "specular")?.clone())
            .with_specular_axis(required(&a.specular_axis, "specular-axis")?);
        if let Some(levels) = &a.diffuse_levels {
            axes = axes.with_diffuse_levels(levels.iter().map(|s| parse_rgb(s)).collect::<Result<_>>()?);
        }
        (axes.grid(&template)?, Some(axes))
    } else {
        let specs: Vec<(String, Vec<f64>)> = required(&a.axes, "axis")?.iter().map(|s| parse_axis(s)).collect::<Result<_>>()?;
        (sweep_grid(&template, &specs)?, None)
    };
    log::info!("sweeping {} materials", grid.len());
    let remapper = Remapper::with_options(&a.scene.scene()?, a.scene.options())?;
    let rows = remapper.stability_scan(&grid, target, scheme);

    create_out(out)?;
    let path = out.join("scan.csv");
    write_scan_csv(&rows, BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))?;
    if let Some(axes) = axes {
        let db = RemapDatabase::from_scan(rows, template.model(), target, scheme, axes);
        write_text(&out.join("database.json"), &db.to_json()?)?;
    }
    echo(&a, "sweep", out)?;
    Ok(Status::Ok)
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(deny_unknown_fields)]
pub struct FitArgs {
    /// database.json written by `sweep`
    #[arg(long)]
    pub database: Option<PathBuf>,
    /// Points in curve.csv [default: 101]
    #[arg(long)]
    pub curve_samples: Option<usize>,
    /// Also fit the kernel ridge baseline into kernel.json
    #[arg(long)]
    pub kernel: Option<bool>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn cmd_fit_transform(flags: &FitArgs, cfg: Option<&Path>) -> Result<Status> {
    let mut a = layered(flags, cfg, "fit-transform")?;
    a.curve_samples.get_or_insert(101);
    a.kernel.get_or_insert(false);
    absolutize(&mut a.database)?;
    absolutize(&mut a.out)?;

    let path = required(&a.database, "database")?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let db = RemapDatabase::from_json(&text).with_context(|| path.display().to_string())?;
    let out = required(&a.out, "out")?;
    let t = xform::fit_transform(&db)?;
    let kernel = if a.kernel == Some(true) { Some(xform::fit_kernel_baseline(&db)?) } else { None };

    create_out(out)?;
    write_text(&out.join("transform.json"), &t.to_json()?)?;
    xform::write_slope_csv(&t, BufWriter::new(File::create(out.join("slope.csv"))?))?;
    xform::write_curve_csv(&t, a.curve_samples.unwrap_or(101), BufWriter::new(File::create(out.join("curve.csv"))?))?;
    if let Some(k) = kernel {
        write_text(&out.join("kernel.json"), &serde_json::to_string_pretty(&k)?)?;
    }
    echo(&a, "fit-transform", out)?;
    Ok(Status::Ok)
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(deny_unknown_fields)]
pub struct SvbrdfArgs {
    /// Material folder with a manifest.toml
    #[arg(long)]
    pub material: Option<PathBuf>,
    /// Transform file; repeat to chain in order
    #[arg(long = "transform")]
    pub transforms: Option<Vec<PathBuf>>,
    /// pfm or png16 [default: pfm]
    #[arg(long)]
    pub encoding: Option<String>,
    /// Light for the plane previews: headlight or oblique:<deg> [default: headlight]
    #[arg(long)]
    pub light: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn cmd_remap_svbrdf(flags: &SvbrdfArgs, cfg: Option<&Path>) -> Result<Status> {
    let mut a = layered(flags, cfg, "remap-svbrdf")?;
    a.encoding.get_or_insert_with(|| "pfm".into());
    a.light.get_or_insert_with(|| "headlight".into());
    absolutize(&mut a.material)?;
    absolutize_all(&mut a.transforms)?;
    absolutize(&mut a.out)?;

    let maps = svbrdf::load_material(required(&a.material, "material")?)?;
    let chain = load_chain(required(&a.transforms, "transform")?)?;
    let encoding = match required(&a.encoding, "encoding")?.to_ascii_lowercase().as_str() {
        "pfm" => MapEncoding::Pfm,
        "png16" | "png" => MapEncoding::Png16,
        other => return Err(brdfmap::Error::Config(format!("unknown encoding '{other}' (pfm or png16)")).into()),
    };
    let light = LightConfig {
        mode: required(&a.light, "light")?.parse::<LightMode>()?,
        ..Default::default()
    };
    light.validate()?;
    let out = required(&a.out, "out")?;

    let (remapped, stats) = svbrdf::remap_maps(&maps, &chain)?;
    let mut previews = Vec::new();
    for pass in [Pass::Full, Pass::SpecularOnly] {
        let src = svbrdf::preview_render(&maps, &light, pass)?;
        let dst = svbrdf::preview_render(&remapped, &light, pass)?;
        let report = imgmetric::ssim(&src, &dst)?;
        previews.push((pass, src, dst, report));
    }

    create_out(out)?;
    svbrdf::save_material(&remapped, out.join(remapped.model.name()), encoding)?;
    for (pass, src, dst, _) in &previews {
        svbrdf::save_preview(src, out.join(format!("preview_source_{}", pass.name())))?;
        svbrdf::save_preview(dst, out.join(format!("preview_target_{}", pass.name())))?;
    }
    let mut w = csv_file(&out.join("summary.csv"))?;
    let mut header = vec!["source_model", "target_model", "width", "height", "texels", "clamped_values", "extrapolated_texels"];
    header.extend(["full_l2", "full_mean_ssim", "specular_l2", "specular_mean_ssim"]);
    w.write_record(&header)?;
    let mut row = vec![
        maps.model.name().to_string(),
        remapped.model.name().to_string(),
        maps.width.to_string(),
        maps.height.to_string(),
        stats.texels.to_string(),
        stats.clamped_values.to_string(),
        stats.extrapolated_texels.to_string(),
    ];
    for (_, _, _, r) in &previews {
        row.push(r.l2.to_string());
        row.push(r.mean_ssim.to_string());
    }
    w.write_record(&row)?;
    w.flush()?;

    let mut w = csv_file(&out.join("tonemap.csv"))?;
    w.write_record(["alpha1", "alpha2"])?;
    for (x, y) in svbrdf::tonemap_curve(&chain) {
        w.write_record([x.to_string(), y.to_string()])?;
    }
    w.flush()?;
    echo(&a, "remap-svbrdf", out)?;
    Ok(Status::Ok)
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(deny_unknown_fields)]
pub struct RenderArgs {
    /// Material spec file
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// full, diffuse or specular [default: full]
    #[arg(long)]
    pub pass: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(default)]
    pub scene: SceneArgs,
}

pub fn cmd_render(flags: &RenderArgs, cfg: Option<&Path>) -> Result<Status> {
    let mut a = layered(flags, cfg, "render")?;
    a.pass.get_or_insert_with(|| "full".into());
    a.scene.fill_defaults();
    absolutize(&mut a.spec)?;
    absolutize(&mut a.out)?;

    let spec = read_spec(required(&a.spec, "spec")?)?;
    let pass: Pass = required(&a.pass, "pass")?.parse()?;
    let out = required(&a.out, "out")?;
    let remapper = Remapper::with_options(&a.scene.scene()?, a.scene.options())?;
    let img = remapper.renderer().render(&spec, pass)?;

    create_out(out)?;
    write_pfm(out.join("render.pfm"), &img)?;
    write_png_srgb(out.join("render.png"), &img)?;
    echo(&a, "render", out)?;
    Ok(Status::Ok)
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(deny_unknown_fields)]
pub struct CompareArgs {
    /// First PFM image
    pub a: Option<PathBuf>,
    /// Second PFM image
    pub b: Option<PathBuf>,
    /// Also write compare.csv and the SSIM map into this directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn cmd_compare(flags: &CompareArgs, cfg: Option<&Path>) -> Result<Status> {
    let mut a = layered(flags, cfg, "compare")?;
    absolutize(&mut a.a)?;
    absolutize(&mut a.b)?;
    absolutize(&mut a.out)?;
    let load = |p: &Path| -> Result<_> { Ok(read_pfm(p)?.into_rgb(Pass::Full)?) };
    let x = load(required(&a.a, "a")?)?;
    let y = load(required(&a.b, "b")?)?;
    let report = imgmetric::ssim(&x, &y)?;

    let mut w = csv::Writer::from_writer(io::stdout().lock());
    write_report_row(&mut w, &report)?;
    w.flush()?;
    if let Some(out) = &a.out {
        create_out(out)?;
        let mut w = csv_file(&out.join("compare.csv"))?;
        write_report_row(&mut w, &report)?;
        w.flush()?;
        write_pfm_gray(out.join("ssim.pfm"), &report.ssim_map)?;
        write_png_false_color(out.join("ssim.png"), &report.ssim_map, 0.0, 1.0)?;
        echo(&a, "compare", out)?;
    }
    Ok(Status::Ok)
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(deny_unknown_fields)]
pub struct RoundtripArgs {
    /// Source material spec file
    #[arg(long)]
    pub source: Option<PathBuf>,
    /// Intermediate model
    #[arg(long)]
    pub via: Option<String>,
    /// simple, two-stage or three-stage [default: two-stage]
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(default)]
    pub scene: SceneArgs,
}

pub fn cmd_roundtrip(flags: &RoundtripArgs, cfg: Option<&Path>) -> Result<Status> {
    let mut a = layered(flags, cfg, "roundtrip")?;
    a.scheme.get_or_insert_with(|| RemapScheme::TwoStage.name().into());
    a.scene.fill_defaults();
    absolutize(&mut a.source)?;
    absolutize(&mut a.out)?;

    let source = read_spec(required(&a.source, "source")?)?;
    let via: BrdfModel = required(&a.via, "via")?.parse()?;
    let scheme: RemapScheme = required(&a.scheme, "scheme")?.parse()?;
    let out = required(&a.out, "out")?;
    let remapper = Remapper::with_options(&a.scene.scene()?, a.scene.options())?;
    let rt = remapper.round_trip(&source, via, scheme)?;
    let original = source.to_reflectance_form()?;

    create_out(out)?;
    write_text(&out.join("intermediate.brdf"), &format_spec(&rt.forward.target_spec))?;
    write_text(&out.join("recovered.brdf"), &format_spec(&rt.recovered))?;
    let mut w = csv_file(&out.join("roundtrip.csv"))?;
    w.write_record(["param", "original", "recovered", "deviation"])?;
    for ((o, r), (name, d)) in original.params().iter().zip(rt.recovered.params()).zip(&rt.deviation) {
        w.write_record([name.clone(), o.value.to_string(), r.value.to_string(), d.to_string()])?;
    }
    w.flush()?;
    let mut w = csv_file(&out.join("summary.csv"))?;
    let mut header = vec!["source_model", "via", "scheme", "max_deviation", "forward_l2", "backward_l2"];
    header.extend(FLAG_COLUMNS);
    w.write_record(&header)?;
    let mut row = vec![
        source.model().name().to_string(),
        via.name().to_string(),
        scheme.name().to_string(),
        rt.max_deviation().to_string(),
        rt.forward.l2.to_string(),
        rt.backward.l2.to_string(),
    ];
    row.extend(flag_values(&rt.flags));
    w.write_record(&row)?;
    w.flush()?;
    echo(&a, "roundtrip", out)?;
    Ok(flags_status(&rt.flags))
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(deny_unknown_fields)]
pub struct LightStudyArgs {
    /// Transform file; repeat to compare several transforms of the same model pair
    #[arg(long = "transform")]
    pub transforms: Option<Vec<PathBuf>>,
    /// Source material spec; repeatable
    #[arg(long = "material")]
    pub materials: Option<Vec<PathBuf>>,
    /// Evaluation light angles in degrees; 0 is the headlight [default: 0,10,20,30,40,50,60,70]
    #[arg(long, value_delimiter = ',')]
    pub angles: Option<Vec<f64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(default)]
    pub scene: SceneArgs,
}

pub fn cmd_light_study(flags: &LightStudyArgs, cfg: Option<&Path>) -> Result<Status> {
    let mut a = layered(flags, cfg, "light-study")?;
    a.angles.get_or_insert_with(|| (0..8).map(|i| 10.0 * i as f64).collect());
    a.scene.fill_defaults();
    absolutize_all(&mut a.transforms)?;
    absolutize_all(&mut a.materials)?;
    absolutize(&mut a.out)?;

    let transforms = required(&a.transforms, "transform")?
        .iter()
        .map(|p| Ok((p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned()), load_chain(std::slice::from_ref(p))?)))
        .collect::<Result<Vec<_>>>()?;
    let materials = required(&a.materials, "material")?
        .iter()
        .map(|p| Ok((p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned()), read_spec(p)?)))
        .collect::<Result<Vec<_>>>()?;
    let angles = required(&a.angles, "angles")?.clone();
    let out = required(&a.out, "out")?;

    let mut mapped = Vec::new();
    for (tname, t) in &transforms {
        for (mname, m) in &materials {
            let (spec, _) = t.apply(m).with_context(|| format!("{tname} on {mname}"))?.to_spec(t.target_model())?;
            mapped.push((tname, mname, m, spec));
        }
    }
    let base = a.scene.scene()?;
    let mut rows = Vec::new();
    for &angle in &angles {
        let mode = if angle == 0.0 { LightMode::Headlight } else { LightMode::Oblique { theta_deg: angle } };
        let scene = base.clone().with_light(LightConfig { mode, ..base.light });
        let remapper = Remapper::with_options(&scene, a.scene.options())?;
        for (tname, mname, source, target) in &mapped {
            let r = remapper.compare(source, target)?.report;
            rows.push((tname.to_string(), mname.to_string(), angle, r));
        }
    }

    create_out(out)?;
    let mut w = csv_file(&out.join("light_study.csv"))?;
    w.write_record(["transform", "material", "angle", "l2", "mean_ssim", "mean_dissimilarity"])?;
    for (t, m, angle, r) in &rows {
        w.write_record([t.clone(), m.clone(), angle.to_string(), r.l2.to_string(), r.mean_ssim.to_string(), r.mean_dissimilarity.to_string()])?;
    }
    w.flush()?;
    let mut w = csv_file(&out.join("light_study_summary.csv"))?;
    w.write_record(["transform", "mean_dissimilarity"])?;
    for (tname, _) in &transforms {
        let v: Vec<f64> = rows.iter().filter(|r| &r.0 == tname).map(|r| r.3.mean_dissimilarity).collect();
        w.write_record([tname.clone(), (v.iter().sum::<f64>() / v.len() as f64).to_string()])?;
    }
    w.flush()?;
    echo(&a, "light-study", out)?;
    Ok(Status::Ok)
}
