use nalgebra::{DMatrix, DVector};

use crate::encoding::{solve_l1, L1EncoderConfig};
use crate::error::{LsedError, Result};
use crate::learning::AtomDictionary;
use crate::util::norm_sq;

/// A dictionary whose atoms carry class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDictionary {
    dict: AtomDictionary,
    labels: Vec<usize>,
    classes: Vec<usize>,
}

impl LabeledDictionary {
    pub fn new(dict: AtomDictionary, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != dict.num_atoms() {
            return Err(LsedError::dims(dict.num_atoms(), labels.len()));
        }
        let mut classes = labels.clone();
        classes.sort_unstable();
        classes.dedup();
        Ok(LabeledDictionary { dict, labels, classes })
    }

    /// Normalises each sample into an atom.
    pub fn from_samples(samples: &[Vec<f64>], labels: Vec<usize>) -> Result<Self> {
        Self::new(AtomDictionary::from_columns_normalized(samples)?, labels)
    }

    pub fn dictionary(&self) -> &AtomDictionary {
        &self.dict
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Distinct class ids in increasing order.
    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    /// `||x - D delta_c(alpha)||^2` for every class `c`.
    pub fn class_residuals(&self, x: &[f64], alpha: &[f64]) -> Vec<f64> {
        self.classes
            .iter()
            .map(|&c| {
                let mut r = x.to_vec();
                for (j, &l) in self.labels.iter().enumerate() {
                    if l == c && alpha[j] != 0.0 {
                        for (ri, ai) in r.iter_mut().zip(self.dict.atom(j)) {
                            *ri -= alpha[j] * ai;
                        }
                    }
                }
                norm_sq(&r)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Class(usize),
    Reject,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub decision: Decision,
    /// Class ids, aligned with `residuals`.
    pub classes: Vec<usize>,
    pub residuals: Vec<f64>,
    pub coefficients: Vec<f64>,
}

fn decide(
    gallery: &LabeledDictionary,
    x: &[f64],
    alpha: Vec<f64>,
    reject_threshold: Option<f64>,
) -> Classification {
    let residuals = gallery.class_residuals(x, &alpha);
    let mut best = 0;
    for (i, &r) in residuals.iter().enumerate() {
        if r < residuals[best] {
            best = i;
        }
    }
    let decision = match reject_threshold {
        Some(t) if residuals[best] > t => Decision::Reject,
        _ => Decision::Class(gallery.classes[best]),
    };
    Classification {
        decision,
        classes: gallery.classes.clone(),
        residuals,
        coefficients: alpha,
    }
}

/// Sparse-representation classification: code `x` over the whole gallery and
/// pick the class whose coefficients alone reconstruct it best.
pub fn src_classify(
    gallery: &LabeledDictionary,
    x: &[f64],
    cfg: &L1EncoderConfig,
    reject_threshold: Option<f64>,
) -> Result<Classification> {
    cfg.validate()?;
    let alpha = solve_l1(&gallery.dict, x, cfg)?.coefficients;
    Ok(decide(gallery, x, alpha, reject_threshold))
}

/// Thin QR of a labelled gallery for repeated least-squares classification.
#[derive(Debug, Clone)]
pub struct RawL2Gallery<'a> {
    gallery: &'a LabeledDictionary,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

const RANK_TOL: f64 = 1e-10;

impl<'a> RawL2Gallery<'a> {
    pub fn new(gallery: &'a LabeledDictionary) -> Result<Self> {
        let d = gallery.dict.dim();
        let n = gallery.dict.num_atoms();
        if n > d {
            return Err(LsedError::Numerical(format!(
                "least-squares gallery has {n} atoms in dimension {d}; columns are dependent"
            )));
        }
        let qr = gallery.dict.atoms().clone().qr();
        let r = qr.r();
        let scale = (0..n).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
        for i in 0..n {
            if r[(i, i)].abs() <= RANK_TOL * scale {
                return Err(LsedError::Numerical(format!(
                    "gallery is rank deficient: atom {i} lies in the span of earlier atoms"
                )));
            }
        }
        Ok(RawL2Gallery {
            gallery,
            q: qr.q(),
            r,
        })
    }

    /// `alpha = R^-1 Q^T x`.
    pub fn coefficients(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.q.nrows() {
            return Err(LsedError::dims(self.q.nrows(), x.len()));
        }
        let qtx = self.q.tr_mul(&DVector::from_column_slice(x));
        let alpha = self
            .r
            .solve_upper_triangular(&qtx)
            .ok_or_else(|| LsedError::Numerical("singular triangular factor".into()))?;
        Ok(alpha.iter().copied().collect())
    }

    pub fn classify(&self, x: &[f64]) -> Result<Classification> {
        let alpha = self.coefficients(x)?;
        Ok(decide(self.gallery, x, alpha, None))
    }
}

/// Least-squares coding via QR followed by the class-residual rule.
pub fn raw_l2_classify(gallery: &LabeledDictionary, x: &[f64]) -> Result<Classification> {
    RawL2Gallery::new(gallery)?.classify(x)
}
