use nalgebra::{DMatrix, DVector};

use crate::error::{LsedError, Result};
use crate::util::norm_sq;

/// Early-stop threshold on the residual norm in orthogonal matching pursuit.
pub const OMP_RESIDUAL_TOL: f64 = 1e-9;

const UNIT_NORM_TOL: f64 = 1e-9;

/// `d x N` dictionary whose columns (atoms) have unit L2 norm.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomDictionary {
    atoms: DMatrix<f64>,
}

impl AtomDictionary {
    /// Wraps an atom matrix, rejecting non-unit or non-finite columns.
    pub fn new(atoms: DMatrix<f64>) -> Result<Self> {
        if atoms.nrows() == 0 || atoms.ncols() == 0 {
            return Err(LsedError::Empty("dictionary"));
        }
        if atoms.iter().any(|v| !v.is_finite()) {
            return Err(LsedError::Numerical("non-finite dictionary entry".into()));
        }
        for (j, col) in atoms.column_iter().enumerate() {
            let n = col.norm();
            if (n - 1.0).abs() > UNIT_NORM_TOL {
                return Err(LsedError::Numerical(format!("atom {j} has norm {n}")));
            }
        }
        if atoms.ncols() < atoms.nrows() {
            log::debug!(
                "dictionary is undercomplete: {} atoms for dimension {}",
                atoms.ncols(),
                atoms.nrows()
            );
        }
        Ok(AtomDictionary { atoms })
    }

    /// Builds a dictionary from column vectors, normalising each to unit length.
    pub fn from_columns_normalized(columns: &[Vec<f64>]) -> Result<Self> {
        let first = columns.first().ok_or(LsedError::Empty("dictionary"))?;
        let d = first.len();
        let mut m = DMatrix::zeros(d, columns.len());
        for (j, c) in columns.iter().enumerate() {
            if c.len() != d {
                return Err(LsedError::dims(d, c.len()));
            }
            let n = norm_sq(c).sqrt();
            if n == 0.0 || !n.is_finite() {
                return Err(LsedError::Numerical(format!("column {j} cannot be normalised")));
            }
            for (i, v) in c.iter().enumerate() {
                m[(i, j)] = v / n;
            }
        }
        AtomDictionary::new(m)
    }

    pub fn dim(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn num_atoms(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn atoms(&self) -> &DMatrix<f64> {
        &self.atoms
    }

    pub fn atom(&self, j: usize) -> &[f64] {
        let d = self.dim();
        &self.atoms.as_slice()[j * d..(j + 1) * d]
    }

    pub(crate) fn set_atom(&mut self, j: usize, values: &[f64]) {
        let d = self.dim();
        self.atoms.as_mut_slice()[j * d..(j + 1) * d].copy_from_slice(values);
    }

    /// `D^T r` written into `out`.
    pub(crate) fn correlate_into(&self, r: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for (j, o) in out.iter_mut().enumerate() {
            let a = &self.atoms.as_slice()[j * d..(j + 1) * d];
            *o = a.iter().zip(r).map(|(x, y)| x * y).sum();
        }
    }

    /// `D alpha` for a dense coefficient vector.
    pub fn reconstruct(&self, alpha: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; d];
        for (j, &c) in alpha.iter().enumerate() {
            if c != 0.0 {
                for (o, a) in out.iter_mut().zip(self.atom(j)) {
                    *o += c * a;
                }
            }
        }
        out
    }

    pub(crate) fn reconstruct_sparse(&self, support: &[usize], coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (&j, &c) in support.iter().zip(coeffs) {
            for (o, a) in out.iter_mut().zip(self.atom(j)) {
                *o += c * a;
            }
        }
        out
    }
}

/// Support, coefficients and per-step residual norms of a pursuit run.
#[derive(Debug, Clone, PartialEq)]
pub struct OmpResult {
    /// Selected atoms in selection order.
    pub support: Vec<usize>,
    /// Least-squares coefficients aligned with `support`.
    pub coefficients: Vec<f64>,
    /// Residual norm before the first selection and after every step.
    pub residual_norms: Vec<f64>,
    pub residual: Vec<f64>,
}

impl OmpResult {
    pub fn dense(&self, num_atoms: usize) -> Vec<f64> {
        let mut out = vec![0.0; num_atoms];
        for (&j, &c) in self.support.iter().zip(&self.coefficients) {
            out[j] = c;
        }
        out
    }
}

/// Orthogonal matching pursuit with at most `sparsity` atoms.
///
/// Each step selects the atom with the largest absolute correlation with the
/// residual (lowest index on ties) and refits all selected coefficients by
/// least squares. Stops early once the residual norm drops below
/// [`OMP_RESIDUAL_TOL`].
pub fn omp_detailed(dict: &AtomDictionary, x: &[f64], sparsity: usize) -> Result<OmpResult> {
    omp_seeded(dict, x, sparsity, &[])
}

/// OMP whose first selections are forced to `prefix`.
pub(crate) fn omp_seeded(
    dict: &AtomDictionary,
    x: &[f64],
    sparsity: usize,
    prefix: &[usize],
) -> Result<OmpResult> {
    let d = dict.dim();
    if x.len() != d {
        return Err(LsedError::dims(d, x.len()));
    }
    if sparsity == 0 || sparsity > d {
        return Err(LsedError::config(format!(
            "sparsity target {sparsity} must lie in 1..={d}"
        )));
    }
    let n = dict.num_atoms();
    let mut support: Vec<usize> = Vec::with_capacity(sparsity);
    let mut coefficients: Vec<f64> = Vec::new();
    let mut residual = x.to_vec();
    let mut residual_norms = vec![norm_sq(&residual).sqrt()];
    let mut corr = vec![0.0; n];
    let mut selected = vec![false; n];

    while support.len() < sparsity && *residual_norms.last().unwrap() > OMP_RESIDUAL_TOL {
        let pick = if let Some(&j) = prefix.get(support.len()).filter(|&&j| j < n && !selected[j]) {
            Some(j)
        } else {
            dict.correlate_into(&residual, &mut corr);
            let mut best: Option<(usize, f64)> = None;
            for (j, &c) in corr.iter().enumerate() {
                if selected[j] {
                    continue;
                }
                if best.is_none_or(|(_, b)| c.abs() > b) {
                    best = Some((j, c.abs()));
                }
            }
            best.map(|b| b.0)
        };
        let Some(j) = pick else { break };
        support.push(j);
        let Some(coeffs) = least_squares_on_support(dict, &support, x) else {
            // the new atom is linearly dependent on the current support
            support.pop();
            break;
        };
        selected[j] = true;
        coefficients = coeffs;
        let approx = dict.reconstruct_sparse(&support, &coefficients);
        for ((r, xi), a) in residual.iter_mut().zip(x).zip(&approx) {
            *r = xi - a;
        }
        residual_norms.push(norm_sq(&residual).sqrt());
    }

    Ok(OmpResult {
        support,
        coefficients,
        residual_norms,
        residual,
    })
}

/// Dense OMP code of length `N`.
pub fn omp(dict: &AtomDictionary, x: &[f64], sparsity: usize) -> Result<Vec<f64>> {
    Ok(omp_detailed(dict, x, sparsity)?.dense(dict.num_atoms()))
}

fn least_squares_on_support(dict: &AtomDictionary, support: &[usize], x: &[f64]) -> Option<Vec<f64>> {
    let k = support.len();
    let gram = DMatrix::from_fn(k, k, |a, b| {
        crate::util::dot(dict.atom(support[a]), dict.atom(support[b]))
    });
    let rhs = DVector::from_iterator(k, support.iter().map(|&j| crate::util::dot(dict.atom(j), x)));
    let chol = gram.cholesky()?;
    let l = chol.l();
    let min_diag = (0..k).map(|i| l[(i, i)]).fold(f64::INFINITY, f64::min);
    if min_diag < 1e-7 {
        return None;
    }
    let sol = chol.solve(&rhs);
    Some(sol.iter().copied().collect())
}
