use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{LsedError, Result};
use crate::imaging::{FeatureVector, Image};
use crate::learning::sample_dim;

/// Fraction of total variance kept by default.
pub const DEFAULT_PCA_ENERGY: f64 = 0.99;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    mean: Vec<f64>,
    /// `D x k`, orthonormal columns in decreasing-variance order.
    basis: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    retained: f64,
}

impl PcaModel {
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn num_components(&self) -> usize {
        self.basis.ncols()
    }

    /// Variances along the kept directions.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Fraction of the training variance captured by the kept directions.
    pub fn retained_energy(&self) -> f64 {
        self.retained
    }

    pub fn project(&self, x: &[f64]) -> Result<FeatureVector> {
        if x.len() != self.mean.len() {
            return Err(LsedError::dims(self.mean.len(), x.len()));
        }
        let centred = DVector::from_iterator(x.len(), x.iter().zip(&self.mean).map(|(a, m)| a - m));
        Ok(self.basis.tr_mul(&centred).iter().copied().collect())
    }

    pub fn project_image(&self, image: &Image) -> Result<FeatureVector> {
        self.project(image.pixels())
    }

    pub fn reconstruct(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.num_components() {
            return Err(LsedError::dims(self.num_components(), y.len()));
        }
        let v = &self.basis * DVector::from_column_slice(y);
        Ok(v.iter().zip(&self.mean).map(|(a, m)| a + m).collect())
    }
}

/// Principal components keeping the smallest number of directions whose
/// variance reaches `energy` of the total.
pub fn pca_train(samples: &[Vec<f64>], energy: f64) -> Result<PcaModel> {
    let dim = sample_dim(samples)?;
    let m = samples.len();
    if m < 2 {
        return Err(LsedError::config("PCA needs at least 2 samples"));
    }
    if !(energy > 0.0 && energy <= 1.0) {
        return Err(LsedError::config("PCA energy must lie in (0, 1]"));
    }
    let mut mean = vec![0.0; dim];
    for s in samples {
        for (a, v) in mean.iter_mut().zip(s) {
            *a += v;
        }
    }
    mean.iter_mut().for_each(|a| *a /= m as f64);
    // rows are centred samples
    let x = DMatrix::from_fn(m, dim, |i, j| samples[i][j] - mean[j]);
    let scale = 1.0 / (m - 1) as f64;

    let (values, vectors) = if m < dim {
        // eigenvectors of X X^T map to those of X^T X
        let eig = SymmetricEigen::new(&x * x.transpose());
        let xt = x.transpose();
        let mut vecs = DMatrix::zeros(dim, m);
        for k in 0..m {
            let lam = eig.eigenvalues[k];
            if lam > 0.0 {
                let u = &xt * eig.eigenvectors.column(k);
                let n = u.norm();
                if n > 0.0 {
                    vecs.set_column(k, &(u / n));
                }
            }
        }
        (eig.eigenvalues.map(|l| l.max(0.0) * scale), vecs)
    } else {
        let eig = SymmetricEigen::new(x.transpose() * &x);
        (eig.eigenvalues.map(|l| l.max(0.0) * scale), eig.eigenvectors)
    };

    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        return Err(LsedError::Numerical("training samples have no variance".into()));
    }
    let mut kept = Vec::new();
    let mut acc = 0.0;
    for &i in &order {
        kept.push(i);
        acc += values[i];
        if acc >= energy * total * (1.0 - 1e-12) {
            break;
        }
    }
    let mut basis = DMatrix::zeros(dim, kept.len());
    for (c, &i) in kept.iter().enumerate() {
        let mut col = vectors.column(i).clone_owned();
        // deterministic sign: largest-magnitude entry positive
        let imax = col.iamax();
        if col[imax] < 0.0 {
            col.neg_mut();
        }
        basis.set_column(c, &col);
    }
    Ok(PcaModel {
        mean,
        basis,
        eigenvalues: kept.iter().map(|&i| values[i]).collect(),
        retained: acc / total,
    })
}

/// PCA on vectorised images (all of the same size).
pub fn pca_train_images(images: &[Image], energy: f64) -> Result<PcaModel> {
    let samples: Vec<Vec<f64>> = images.iter().map(|im| im.pixels().to_vec()).collect();
    pca_train(&samples, energy)
}
