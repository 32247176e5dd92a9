//! Fixtures shared by the benchmarks.

use brdfmap::brdf::BrdfModel;
use brdfmap::{BrdfSpec, SvbrdfMaps, TransformModel};

/// Conductor-like spec of `model` with a visible highlight.
pub fn sample_spec(model: BrdfModel) -> BrdfSpec {
    let mut s = BrdfSpec::new(model);
    for (name, v) in [("specular_r", 0.8), ("specular_g", 0.6), ("specular_b", 0.4), ("roughness", 0.2)] {
        if s.index_of(name).is_some() {
            s.set(name, v).expect("value in bounds");
        }
    }
    s
}

/// Maps with roughness and specular varying across the texture.
pub fn gradient_maps(model: BrdfModel, size: usize) -> SvbrdfMaps {
    let mut m = SvbrdfMaps::uniform(model, size, size, [0.3, 0.2, 0.1], [0.2; 3], 0.3);
    let n = (size * size) as f32;
    for i in 0..size * size {
        let t = i as f32 / n;
        m.roughness[i] = 0.05 + 0.9 * t;
        m.specular[i] = [0.1 + 0.5 * t, 0.3, 0.1];
    }
    m
}

/// WardA to WardB transform with a curved roughness mapping.
pub fn curved_transform() -> TransformModel {
    let mut t = TransformModel::identity(BrdfModel::WardA);
    t.target_model = BrdfModel::WardB;
    t.roughness_poly = vec![0.02, 0.8, 0.3];
    t.slope = [0.6, 0.3, 4.0, 0.1, 10.0];
    t
}
