//! Face descriptors: pooled patch codes (LSED), holistic PCA features and
//! sparse codes, and set averages.

mod face;
mod lsed;
mod pca;

pub use face::{FaceDescriptor, LSKD_MAGIC};
pub use lsed::{harvest_patch_features, lsed_descriptor, pool_codes, LsedPipeline};
pub use pca::{pca_train, pca_train_images, PcaModel, DEFAULT_PCA_ENERGY};

use crate::encoding::{encode_l1, L1EncoderConfig, SparseCode};
use crate::error::{LsedError, Result};
use crate::learning::AtomDictionary;

/// Sparse code of a holistic feature vector, used as a descriptor without
/// any post-processing.
pub fn holistic_sr_descriptor(
    dict: &AtomDictionary,
    x: &[f64],
    cfg: &L1EncoderConfig,
) -> Result<SparseCode> {
    encode_l1(dict, x, cfg)
}

/// Element-wise mean of a set of compatible descriptors.
pub fn mean_set_descriptor(set: &[FaceDescriptor]) -> Result<FaceDescriptor> {
    let first = set.first().ok_or(LsedError::Empty("descriptor set"))?;
    let mut values = vec![0.0; first.dim()];
    for d in set {
        first.check_compatible(d)?;
        for (v, x) in values.iter_mut().zip(d.values()) {
            *v += x;
        }
    }
    let n = set.len() as f64;
    values.iter_mut().for_each(|v| *v /= n);
    FaceDescriptor::new(first.regions(), first.code_len(), values, first.kind(), first.config_hash())
}
