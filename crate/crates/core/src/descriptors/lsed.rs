use rand::seq::index::sample;

use super::FaceDescriptor;
use crate::encoding::SparseEncoder;
use crate::error::{LsedError, Result};
use crate::imaging::{
    extract_patches, normalize_patch, DctFeatureExtractor, FeatureVector, Image, PatchGridConfig,
    DEFAULT_DCT_FEATURES,
};
use crate::learning::ModelKind;
use crate::par;
use crate::util::{derive_seed, hash8};

// Patches per parallel job; fixed so sums do not depend on the worker count.
const CHUNK: usize = 64;

/// Patches -> normalised DCT features -> sparse codes -> per-region mean.
#[derive(Debug, Clone)]
pub struct LsedPipeline<E> {
    encoder: E,
    grid: PatchGridConfig,
    dct: DctFeatureExtractor,
    config_hash: [u8; 8],
}

impl<E: SparseEncoder> LsedPipeline<E> {
    pub fn new(encoder: E, grid: PatchGridConfig) -> Result<Self> {
        Self::with_features(encoder, grid, DEFAULT_DCT_FEATURES)
    }

    pub fn with_features(encoder: E, grid: PatchGridConfig, num_features: usize) -> Result<Self> {
        grid.validate()?;
        let dct = DctFeatureExtractor::new(grid.patch_size, num_features)?;
        if encoder.dim() != num_features {
            return Err(LsedError::Incompatible(format!(
                "encoder expects {}-dimensional features, pipeline produces {num_features}",
                encoder.dim()
            )));
        }
        let config_hash = hash8(&[
            &encoder.model_id(),
            &grid.to_bytes(),
            &(num_features as u64).to_le_bytes(),
        ]);
        Ok(LsedPipeline {
            encoder,
            grid,
            dct,
            config_hash,
        })
    }

    pub fn encoder(&self) -> &E {
        &self.encoder
    }

    pub fn grid(&self) -> &PatchGridConfig {
        &self.grid
    }

    pub fn config_hash(&self) -> [u8; 8] {
        self.config_hash
    }

    pub fn descriptor_dim(&self) -> usize {
        self.grid.num_regions() * self.encoder.code_len()
    }

    /// Normalised DCT features of every patch, grouped by region.
    pub fn region_features(&self, image: &Image) -> Result<Vec<Vec<FeatureVector>>> {
        region_features(image, &self.grid, &self.dct)
    }

    pub fn describe(&self, image: &Image) -> Result<FaceDescriptor> {
        let features = self.region_features(image)?;
        self.describe_features(&features)
    }

    /// Encodes and pools precomputed region features.
    pub fn describe_features(&self, features: &[Vec<FeatureVector>]) -> Result<FaceDescriptor> {
        let n = self.encoder.code_len();
        let abs = self.encoder.kind() == ModelKind::Dictionary;
        let jobs: Vec<(usize, usize)> = features
            .iter()
            .enumerate()
            .flat_map(|(r, f)| (0..f.len()).step_by(CHUNK).map(move |s| (r, s)))
            .collect();
        let partial = par::try_map_range(jobs.len(), |j| {
            let (r, start) = jobs[j];
            let end = (start + CHUNK).min(features[r].len());
            let mut sum = vec![0.0; n];
            let mut code = vec![0.0; n];
            for x in &features[r][start..end] {
                self.encoder.encode_into(x, &mut code)?;
                accumulate(&mut sum, &code, abs);
            }
            Ok::<_, LsedError>(sum)
        })?;
        let mut values = vec![0.0; features.len() * n];
        for ((r, _), sum) in jobs.iter().zip(&partial) {
            for (v, s) in values[r * n..(r + 1) * n].iter_mut().zip(sum) {
                *v += s;
            }
        }
        for (r, f) in features.iter().enumerate() {
            if f.is_empty() {
                return Err(LsedError::Empty("region without patches"));
            }
            let inv = 1.0 / f.len() as f64;
            values[r * n..(r + 1) * n].iter_mut().for_each(|v| *v *= inv);
        }
        FaceDescriptor::new(features.len(), n, values, self.encoder.kind(), self.config_hash)
    }
}

fn accumulate(sum: &mut [f64], code: &[f64], abs: bool) {
    if abs {
        for (s, c) in sum.iter_mut().zip(code) {
            *s += c.abs();
        }
    } else {
        for (s, c) in sum.iter_mut().zip(code) {
            *s += c;
        }
    }
}

/// Average of patch codes; absolute values are taken first when `abs`.
pub fn pool_codes(codes: &[Vec<f64>], abs: bool) -> Result<Vec<f64>> {
    let first = codes.first().ok_or(LsedError::Empty("code set"))?;
    let mut sum = vec![0.0; first.len()];
    for c in codes {
        if c.len() != sum.len() {
            return Err(LsedError::dims(sum.len(), c.len()));
        }
        accumulate(&mut sum, c, abs);
    }
    let inv = 1.0 / codes.len() as f64;
    sum.iter_mut().for_each(|v| *v *= inv);
    Ok(sum)
}

pub fn lsed_descriptor<E: SparseEncoder>(
    image: &Image,
    encoder: &E,
    grid: &PatchGridConfig,
) -> Result<FaceDescriptor> {
    LsedPipeline::new(encoder, *grid)?.describe(image)
}

fn region_features(
    image: &Image,
    grid: &PatchGridConfig,
    dct: &DctFeatureExtractor,
) -> Result<Vec<Vec<FeatureVector>>> {
    extract_patches(image, grid)?
        .iter()
        .map(|region| {
            region
                .iter()
                .map(|p| dct.features(&normalize_patch(p)))
                .collect::<Result<Vec<_>>>()
        })
        .collect()
}

/// Normalised DCT patch features pooled from a set of images, for model
/// training. With `per_image = Some(k)` a seeded random subset of `k`
/// patches is kept from each image.
pub fn harvest_patch_features(
    images: &[Image],
    grid: &PatchGridConfig,
    num_features: usize,
    per_image: Option<usize>,
    seed: u64,
) -> Result<Vec<FeatureVector>> {
    let dct = DctFeatureExtractor::new(grid.patch_size, num_features)?;
    let per = par::try_map_range(images.len(), |i| {
        let mut all: Vec<FeatureVector> = region_features(&images[i], grid, &dct)?
            .into_iter()
            .flatten()
            .collect();
        if let Some(k) = per_image {
            if k < all.len() {
                let mut rng = crate::seeded_rng(derive_seed(seed, i as u64));
                let mut idx = sample(&mut rng, all.len(), k).into_vec();
                idx.sort_unstable();
                all = idx.into_iter().map(|j| std::mem::take(&mut all[j])).collect();
            }
        }
        Ok::<_, LsedError>(all)
    })?;
    Ok(per.into_iter().flatten().collect())
}
