//! Image-based remapping of material appearance between BRDF models.
//!
//! A source material is rendered on a sphere under a point light; the
//! parameters of a target model are fitted so that its renders match,
//! using a bounded least-squares optimizer that only sees images. A database
//! of such uniform remaps is then condensed into a compact
//! [`TransformModel`](xform::TransformModel) that remaps whole SVBRDF texture
//! maps without further optimization.

pub mod brdf;
pub mod error;
pub mod image;
pub mod imgmetric;
pub mod math;
pub mod optim;
pub mod remap;
pub mod render;
pub mod svbrdf;
pub mod xform;

pub use brdf::{BrdfModel, BrdfSpec, Pass, Term};
pub use error::{Error, Result};
pub use image::RenderedImage;
pub use remap::{RemapResult, RemapScheme};
pub use render::{LightConfig, LightMode, SceneConfig};
pub use svbrdf::SvbrdfMaps;
pub use xform::{ChainedTransform, TransformModel};
