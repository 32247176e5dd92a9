use std::hint::black_box;

use brdfmap::brdf::ShadingGeometry;
use brdfmap::imgmetric;
use brdfmap::math::Vec3;
use brdfmap::remap::Remapper;
use brdfmap::render::Renderer;
use brdfmap::svbrdf::remap_maps;
use brdfmap::xform::{apply_transform, fit_slope_function, slope_fn};
use brdfmap::{BrdfModel, Pass, RemapScheme, SceneConfig};
use brdfmap_bench::{curved_transform, gradient_maps, sample_spec};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

const MODELS: [BrdfModel; 7] = [
    BrdfModel::Lambert,
    BrdfModel::WardA,
    BrdfModel::WardB,
    BrdfModel::Beckmann,
    BrdfModel::Ggx,
    BrdfModel::BlinnPhong,
    BrdfModel::AshikhminShirley,
];

fn brdf_eval(c: &mut Criterion) {
    let g = ShadingGeometry::new(
        Vec3::new(0.3, 0.1, 0.95).normalized(),
        Vec3::new(-0.2, 0.2, 0.96).normalized(),
        Vec3::new(0.0, 0.0, 1.0),
    )
    .unwrap();
    let mut group = c.benchmark_group("brdf_eval");
    for model in MODELS {
        let m = sample_spec(model).material().unwrap();
        group.bench_function(BenchmarkId::from_parameter(model), |b| b.iter(|| black_box(&m).eval(black_box(&g), Pass::Full)));
    }
    group.finish();
}

fn render_and_compare(c: &mut Criterion) {
    let renderer = Renderer::new(&SceneConfig::with_size(128)).unwrap();
    let a = renderer.render(&sample_spec(BrdfModel::Ggx), Pass::Full).unwrap();
    let b = renderer.render(&sample_spec(BrdfModel::WardA), Pass::Full).unwrap();
    let spec = sample_spec(BrdfModel::Ggx);
    c.bench_function("render_sphere_128", |bch| bch.iter(|| renderer.render(black_box(&spec), Pass::Full).unwrap()));
    c.bench_function("ssim_128", |bch| bch.iter(|| imgmetric::ssim(black_box(&a), black_box(&b)).unwrap()));
}

fn remap_uniform(c: &mut Criterion) {
    let remapper = Remapper::new(&SceneConfig::with_size(64)).unwrap();
    let source = sample_spec(BrdfModel::WardA);
    let mut group = c.benchmark_group("remap_uniform_64");
    group.sample_size(10);
    for scheme in [RemapScheme::Simple, RemapScheme::TwoStage, RemapScheme::ThreeStage] {
        group.bench_function(BenchmarkId::from_parameter(scheme), |b| {
            b.iter(|| remapper.remap(black_box(&source), BrdfModel::Ggx, scheme, None).unwrap())
        });
    }
    group.finish();
}

fn transforms(c: &mut Criterion) {
    let t = curved_transform();
    let spec = sample_spec(BrdfModel::WardA);
    c.bench_function("apply_transform", |b| b.iter(|| apply_transform(black_box(&t), black_box(&spec)).unwrap()));

    let alphas: Vec<f64> = (0..8).map(|i| 0.05 + 0.12 * i as f64).collect();
    let k: Vec<f64> = alphas.iter().map(|&a| slope_fn(&t.slope, a)).collect();
    c.bench_function("fit_slope_function", |b| b.iter(|| fit_slope_function(black_box(&alphas), black_box(&k)).unwrap()));

    let maps = gradient_maps(BrdfModel::WardA, 256);
    let mut group = c.benchmark_group("remap_maps");
    group.throughput(Throughput::Elements(maps.len() as u64));
    group.bench_function("256x256", |b| b.iter(|| remap_maps(black_box(&maps), &t).unwrap()));
    group.finish();
}

criterion_group!(benches, brdf_eval, render_and_compare, remap_uniform, transforms);
criterion_main!(benches);
