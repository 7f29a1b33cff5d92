//! Training of the three encoder models.

mod dictionary;
mod gmm;
mod kmeans;
mod ksvd;
pub mod persist;
mod sann;

pub use dictionary::{omp, omp_detailed, AtomDictionary, OmpResult, OMP_RESIDUAL_TOL};
pub use gmm::{em_train, em_train_detailed, EmConfig, EmOutcome, MixtureModel, COVARIANCE_FLOOR};
pub use kmeans::{kmeans, kmeans_detailed, KMeansOutcome};
pub use ksvd::{ksvd_train, ksvd_train_detailed, KsvdConfig, KsvdOutcome};
pub use persist::{Model, ModelKind, LSKM_MAGIC};
pub use sann::{
    sann_cost, sann_gradient, sann_train, sann_train_detailed, sann_train_from, AutoencoderModel,
    SannConfig,
    SannCost, SannOutcome, RHO_CLAMP,
};

use crate::error::{LsedError, Result};

/// Checks that `samples` is non-empty, rectangular and finite; returns the
/// common dimension.
pub fn sample_dim(samples: &[Vec<f64>]) -> Result<usize> {
    let first = samples.first().ok_or(LsedError::Empty("sample set"))?;
    let d = first.len();
    if d == 0 {
        return Err(LsedError::Empty("sample vector"));
    }
    for s in samples {
        if s.len() != d {
            return Err(LsedError::dims(d, s.len()));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(LsedError::Numerical("non-finite sample value".into()));
        }
    }
    Ok(d)
}
