use std::f64::consts::PI;

use crate::error::{LsedError, Result};
use crate::imaging::{FeatureVector, Patch};

/// Number of low-frequency coefficients kept per patch (DC excluded).
pub const DEFAULT_DCT_FEATURES: usize = 15;

/// JPEG zig-zag scan order for an `n x n` block, as `(row, col)` pairs.
pub fn zigzag_order(n: usize) -> Vec<(usize, usize)> {
    let mut order = Vec::with_capacity(n * n);
    for s in 0..(2 * n - 1) {
        let lo = s.saturating_sub(n - 1);
        let hi = s.min(n - 1);
        if s % 2 == 0 {
            // up-right: row decreasing
            for r in (lo..=hi).rev() {
                order.push((r, s - r));
            }
        } else {
            for r in lo..=hi {
                order.push((r, s - r));
            }
        }
    }
    order
}

fn cosine_basis(n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for k in 0..n {
        let scale = if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        for i in 0..n {
            c[k * n + i] = scale * (PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64).cos();
        }
    }
    c
}

/// Orthonormal 2D DCT-II of a square block, returned row-major
/// (`out[u * n + v]` is vertical frequency `u`, horizontal frequency `v`).
pub fn dct2(patch: &Patch) -> Vec<f64> {
    let n = patch.size;
    let c = cosine_basis(n);
    separable_dct(&c, n, &patch.values)
}

fn separable_dct(c: &[f64], n: usize, values: &[f64]) -> Vec<f64> {
    // rows first: tmp = X C^T, then out = C tmp
    let mut tmp = vec![0.0; n * n];
    for y in 0..n {
        let row = &values[y * n..(y + 1) * n];
        for v in 0..n {
            let basis = &c[v * n..(v + 1) * n];
            tmp[y * n + v] = row.iter().zip(basis).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; n * n];
    for u in 0..n {
        let basis = &c[u * n..(u + 1) * n];
        for v in 0..n {
            let mut acc = 0.0;
            for y in 0..n {
                acc += basis[y] * tmp[y * n + v];
            }
            out[u * n + v] = acc;
        }
    }
    out
}

/// Cached DCT basis plus zig-zag selection of the lowest-frequency AC
/// coefficients.
#[derive(Debug, Clone)]
pub struct DctFeatureExtractor {
    size: usize,
    basis: Vec<f64>,
    selection: Vec<usize>,
}

impl DctFeatureExtractor {
    pub fn new(size: usize, num_features: usize) -> Result<Self> {
        if size < 2 {
            return Err(LsedError::config("DCT block size must be at least 2"));
        }
        if num_features == 0 || num_features >= size * size {
            return Err(LsedError::config(format!(
                "cannot take {num_features} AC coefficients from a {size}x{size} block"
            )));
        }
        let selection = zigzag_order(size)
            .into_iter()
            .skip(1)
            .take(num_features)
            .map(|(r, c)| r * size + c)
            .collect();
        Ok(DctFeatureExtractor {
            size,
            basis: cosine_basis(size),
            selection,
        })
    }

    pub fn num_features(&self) -> usize {
        self.selection.len()
    }

    pub fn patch_size(&self) -> usize {
        self.size
    }

    /// Zig-zag coefficients `1..=num_features` of the patch's 2D DCT.
    pub fn features(&self, patch: &Patch) -> Result<FeatureVector> {
        if patch.size != self.size || patch.values.len() != self.size * self.size {
            return Err(LsedError::Incompatible(format!(
                "expected a square {0}x{0} patch, got {1} values with side {2}",
                self.size,
                patch.values.len(),
                patch.size
            )));
        }
        let full = separable_dct(&self.basis, self.size, &patch.values);
        Ok(self.selection.iter().map(|&i| full[i]).collect())
    }
}
