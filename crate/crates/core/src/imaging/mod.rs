//! Grayscale images, patch decomposition and DCT texture features.

mod dct;
mod image;
pub mod io;
mod patches;
mod perturb;
mod synth;

pub use dct::{dct2, zigzag_order, DctFeatureExtractor, DEFAULT_DCT_FEATURES};
pub use image::Image;
pub use patches::{
    extract_patches, normalize_patch, region_blocks, Patch, PatchGridConfig, VARIANCE_FLOOR,
};
pub use perturb::{perturb, robustness_grid, Perturbation};
pub use synth::{synth_identity_image, SynthParams};

/// A patch feature, holistic feature, or synthetic sample.
pub type FeatureVector = Vec<f64>;
