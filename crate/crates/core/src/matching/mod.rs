//! Distances and decision rules over descriptors and sparse codes.
//!
//! Every score is a distance: smaller means more similar.

mod classify;
mod set;

pub use classify::{
    raw_l2_classify, src_classify, Classification, Decision, LabeledDictionary, RawL2Gallery,
};
pub use set::{hausdorff_distance, directed_hausdorff, mean_set_distance, CountingDistance};

use std::io::Write;

use crate::descriptors::FaceDescriptor;
use crate::encoding::{SparseCode, SUPPORT_TOL};
use crate::error::{LsedError, Result};

/// Denominators below this make a cohort-normalised score undefined.
pub const COHORT_MIN_DENOMINATOR: f64 = 1e-12;

/// Mean over regions of the L1 distance between region vectors.
pub fn raw_distance(a: &FaceDescriptor, b: &FaceDescriptor) -> Result<f64> {
    a.check_compatible(b)?;
    let l1: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).sum();
    Ok(l1 / a.regions() as f64)
}

/// Reference descriptors from identities disjoint from the compared faces.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortSet {
    descriptors: Vec<FaceDescriptor>,
}

impl CohortSet {
    pub fn new(descriptors: Vec<FaceDescriptor>) -> Result<Self> {
        let first = descriptors.first().ok_or(LsedError::Empty("cohort set"))?;
        for d in &descriptors[1..] {
            first.check_compatible(d)?;
        }
        Ok(CohortSet { descriptors })
    }

    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    pub fn descriptors(&self) -> &[FaceDescriptor] {
        &self.descriptors
    }

    /// `sum_i raw(a, C_i)`.
    pub fn raw_sum(&self, a: &FaceDescriptor) -> Result<f64> {
        self.descriptors.iter().map(|c| raw_distance(a, c)).sum()
    }
}

/// `raw(a, b) / (sum_i raw(a, C_i) + sum_i raw(b, C_i))`.
pub fn cohort_normalized_score(a: &FaceDescriptor, b: &FaceDescriptor, cohorts: &CohortSet) -> Result<f64> {
    let raw = raw_distance(a, b)?;
    normalize_with_sums(raw, cohorts.raw_sum(a)?, cohorts.raw_sum(b)?)
}

/// Cohort normalisation from precomputed cohort sums.
pub fn normalize_with_sums(raw: f64, sum_a: f64, sum_b: f64) -> Result<f64> {
    let den = sum_a + sum_b;
    if !(den >= COHORT_MIN_DENOMINATOR) {
        return Err(LsedError::Numerical(format!(
            "degenerate cohort: normalising denominator is {den:e}"
        )));
    }
    Ok(raw / den)
}

/// Distance used to compare sparse codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SrDistance {
    Euclidean,
    /// Number of indices where exactly one code is non-zero.
    Hamming,
}

impl std::str::FromStr for SrDistance {
    type Err = LsedError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(SrDistance::Euclidean),
            "hamming" => Ok(SrDistance::Hamming),
            _ => Err(LsedError::config(format!("unknown code distance '{s}'"))),
        }
    }
}

pub fn sr_similarity(a: &SparseCode, b: &SparseCode, kind: SrDistance) -> Result<f64> {
    sr_distance(&a.values, &b.values, kind)
}

pub fn sr_distance(a: &[f64], b: &[f64], kind: SrDistance) -> Result<f64> {
    if a.len() != b.len() {
        return Err(LsedError::dims(a.len(), b.len()));
    }
    Ok(match kind {
        SrDistance::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
        SrDistance::Hamming => a
            .iter()
            .zip(b)
            .filter(|(x, y)| (x.abs() > SUPPORT_TOL) != (y.abs() > SUPPORT_TOL))
            .count() as f64,
    })
}

/// One line of a score report.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub probe_id: String,
    pub gallery_id: String,
    pub score: f64,
    /// `true` when judged the same identity.
    pub same: bool,
}

/// Writes `probe_id,gallery_id,score,decision` lines with a header.
pub fn write_scores_csv<W: Write>(mut out: W, records: &[ScoreRecord]) -> Result<()> {
    writeln!(out, "probe_id,gallery_id,score,decision")?;
    for r in records {
        writeln!(
            out,
            "{},{},{:e},{}",
            r.probe_id,
            r.gallery_id,
            r.score,
            if r.same { "same" } else { "different" }
        )?;
    }
    Ok(())
}
