use std::collections::BTreeSet;

use super::images::ImageCorpus;
use crate::descriptors::{FaceDescriptor, LsedPipeline};
use crate::encoding::{L1EncoderConfig, SparseEncoder};
use crate::error::{LsedError, Result};
use crate::imaging::Image;
use crate::matching::{raw_distance, src_classify, Decision, LabeledDictionary, RawL2Gallery};
use crate::par;

/// Closed-set identification rule.
#[derive(Debug, Clone, Copy)]
pub enum Identifier<'a, E> {
    /// Nearest gallery descriptor under the raw region distance.
    LsedNn(&'a LsedPipeline<E>),
    /// Sparse-representation classification of downsampled images.
    Src { side: usize, l1: L1EncoderConfig },
    /// Least-squares class residuals of downsampled images.
    RawL2 { side: usize },
}

impl<E> Identifier<'_, E> {
    pub fn name(&self) -> &'static str {
        match self {
            Identifier::LsedNn(_) => "lsed_nn",
            Identifier::Src { .. } => "src",
            Identifier::RawL2 { .. } => "raw_l2",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentificationReport {
    /// Predicted label per probe; `None` when the rule abstained.
    pub predictions: Vec<Option<usize>>,
    pub rank1: f64,
}

/// Image resized to `side`×`side`, flattened and scaled to unit length.
pub fn holistic_features(image: &Image, side: usize) -> Result<Vec<f64>> {
    let mut v = image.resize_bilinear(side, side)?.into_pixels();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    Ok(v)
}

/// Index of the nearest gallery descriptor; ties go to the lowest index.
pub fn nearest_neighbour(gallery: &[FaceDescriptor], probe: &FaceDescriptor) -> Result<usize> {
    let mut best = (f64::INFINITY, usize::MAX);
    for (i, g) in gallery.iter().enumerate() {
        let d = raw_distance(g, probe)?;
        if d < best.0 {
            best = (d, i);
        }
    }
    if best.1 == usize::MAX {
        return Err(LsedError::Empty("gallery"));
    }
    Ok(best.1)
}

/// Rank-1 identification rate of `probes` against `gallery`.
pub fn run_identification<E: SparseEncoder>(
    gallery: &ImageCorpus,
    probes: &ImageCorpus,
    method: &Identifier<'_, E>,
) -> Result<IdentificationReport> {
    if gallery.is_empty() {
        return Err(LsedError::Empty("gallery"));
    }
    let known: BTreeSet<usize> = gallery.labels.iter().copied().collect();
    if let Some(l) = probes.labels.iter().find(|l| !known.contains(l)) {
        return Err(LsedError::Protocol(format!("probe identity {l} is not in the gallery")));
    }
    let predictions: Vec<Option<usize>> = match method {
        Identifier::LsedNn(pipeline) => {
            let gd = par::try_map_slice(&gallery.images, |im| pipeline.describe(im))?;
            par::try_map_slice(&probes.images, |im| -> Result<Option<usize>> {
                let p = pipeline.describe(im)?;
                Ok(Some(gallery.labels[nearest_neighbour(&gd, &p)?]))
            })?
        }
        Identifier::Src { side, l1 } => {
            let dict = holistic_gallery(gallery, *side)?;
            par::try_map_slice(&probes.images, |im| -> Result<Option<usize>> {
                let c = src_classify(&dict, &holistic_features(im, *side)?, l1, None)?;
                Ok(decision_label(c.decision))
            })?
        }
        Identifier::RawL2 { side } => {
            let dict = holistic_gallery(gallery, *side)?;
            let qr = RawL2Gallery::new(&dict)?;
            par::try_map_slice(&probes.images, |im| -> Result<Option<usize>> {
                Ok(decision_label(qr.classify(&holistic_features(im, *side)?)?.decision))
            })?
        }
    };
    let correct = predictions
        .iter()
        .zip(&probes.labels)
        .filter(|(p, l)| **p == Some(**l))
        .count();
    let rank1 = if probes.is_empty() {
        0.0
    } else {
        correct as f64 / probes.len() as f64
    };
    Ok(IdentificationReport { predictions, rank1 })
}

fn holistic_gallery(gallery: &ImageCorpus, side: usize) -> Result<LabeledDictionary> {
    let cols = par::try_map_slice(&gallery.images, |im| holistic_features(im, side))?;
    LabeledDictionary::from_samples(&cols, gallery.labels.clone())
}

fn decision_label(d: Decision) -> Option<usize> {
    match d {
        Decision::Class(c) => Some(c),
        Decision::Reject => None,
    }
}
