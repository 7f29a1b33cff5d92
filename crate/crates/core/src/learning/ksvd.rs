use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;

use super::dictionary::{omp_detailed, omp_seeded, AtomDictionary};
use super::sample_dim;
use crate::error::{LsedError, Result};
use crate::par;
use crate::util::norm_sq;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsvdConfig {
    pub num_atoms: usize,
    /// Maximum non-zeros per training code (T0).
    pub sparsity: usize,
    pub max_iters: usize,
    /// Stop once the relative objective change falls below this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for KsvdConfig {
    fn default() -> Self {
        KsvdConfig {
            num_atoms: 1024,
            sparsity: 3,
            max_iters: 30,
            tol: 1e-5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KsvdOutcome {
    pub dictionary: AtomDictionary,
    /// `||Y - D A||_F^2`, starting with `||Y||_F^2` (all-zero codes) and then
    /// once per completed iteration.
    pub objective_trace: Vec<f64>,
    /// Unused atoms re-seeded from samples, plus accepted swaps.
    pub replaced_atoms: usize,
}

#[derive(Debug, Clone, Default)]
struct Code {
    support: Vec<usize>,
    coeffs: Vec<f64>,
}

pub fn ksvd_train(samples: &[Vec<f64>], cfg: &KsvdConfig) -> Result<AtomDictionary> {
    Ok(ksvd_train_detailed(samples, cfg)?.dictionary)
}

/// Learns a dictionary by alternating pursuit coding and per-atom rank-1
/// SVD updates of the restricted error matrix.
///
/// A sample keeps its previous code whenever the fresh pursuit code
/// reconstructs it worse, which makes the objective non-increasing. Unused
/// atoms are re-seeded from badly reconstructed samples. Codes that greedy
/// pursuit gets wrong are retried from other first atoms, and one guarded
/// atom swap per iteration helps escape poor local minima.
pub fn ksvd_train_detailed(samples: &[Vec<f64>], cfg: &KsvdConfig) -> Result<KsvdOutcome> {
    let d = sample_dim(samples)?;
    let m = samples.len();
    if cfg.num_atoms == 0 {
        return Err(LsedError::config("K-SVD needs at least one atom"));
    }
    if cfg.sparsity == 0 || cfg.sparsity > d {
        return Err(LsedError::config(format!(
            "sparsity target {} must lie in 1..={d}",
            cfg.sparsity
        )));
    }
    if m < cfg.num_atoms {
        log::warn!("K-SVD with {} atoms on only {m} samples", cfg.num_atoms);
    }

    let mut rng = crate::seeded_rng(cfg.seed);
    let mut dict = initial_dictionary(samples, d, cfg.num_atoms, &mut rng)?;
    let mut codes: Vec<Code> = vec![Code::default(); m];
    let mut residuals: Vec<Vec<f64>> = samples.to_vec();
    let mut errors: Vec<f64> = residuals.iter().map(|r| norm_sq(r)).collect();
    let mut trace = vec![errors.iter().sum::<f64>()];
    let mut replaced = 0usize;

    for iter in 0..cfg.max_iters {
        // Sparse coding stage.
        let fresh = par::try_map_range(m, |i| omp_detailed(&dict, &samples[i], cfg.sparsity))?;
        for (i, res) in fresh.into_iter().enumerate() {
            let err = norm_sq(&res.residual);
            if err < errors[i] {
                errors[i] = err;
                residuals[i] = res.residual;
                codes[i] = Code {
                    support: res.support,
                    coeffs: res.coefficients,
                };
            }
        }
        let refined = par::try_map_range(m, |i| refine_support(&dict, &samples[i], cfg.sparsity, errors[i]))?;
        for (i, r) in refined.into_iter().enumerate() {
            if let Some((code, residual, err)) = r {
                codes[i] = code;
                residuals[i] = residual;
                errors[i] = err;
            }
        }

        // Dictionary update stage.
        for k in 0..cfg.num_atoms {
            update_atom(&mut dict, k, &mut codes, &mut residuals, &mut errors);
        }
        replaced += reseed_unused(samples, &mut dict, &codes, &errors);
        if try_swap(samples, &mut dict, &mut codes, &mut residuals, &mut errors, cfg.sparsity)? {
            replaced += 1;
        }

        let objective: f64 = errors.iter().sum();
        let prev = *trace.last().unwrap();
        trace.push(objective);
        log::debug!("K-SVD iteration {iter}: objective {objective:.6e}");
        let rel = if prev > 0.0 { (prev - objective).abs() / prev } else { 0.0 };
        if rel < cfg.tol || objective == 0.0 {
            break;
        }
    }

    Ok(KsvdOutcome {
        dictionary: dict,
        objective_trace: trace,
        replaced_atoms: replaced,
    })
}

fn initial_dictionary(
    samples: &[Vec<f64>],
    d: usize,
    n: usize,
    rng: &mut crate::SeededRng,
) -> Result<AtomDictionary> {
    let picks: Vec<usize> = if samples.len() >= n {
        sample(rng, samples.len(), n).into_vec()
    } else {
        (0..samples.len()).collect()
    };
    let mut cols = Vec::with_capacity(n);
    for &i in &picks {
        let s = &samples[i];
        if norm_sq(s) > 1e-24 {
            cols.push(s.clone());
        }
    }
    while cols.len() < n {
        cols.push((0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect());
    }
    AtomDictionary::from_columns_normalized(&cols)
}

/// Reruns pursuit with the first selection forced to each of the atoms
/// next best correlated with `x`; returns the best code if it beats `err`.
fn refine_support(dict: &AtomDictionary, x: &[f64], sparsity: usize, err: f64) -> Result<Option<(Code, Vec<f64>, f64)>> {
    const BRANCHES: usize = 3;
    if sparsity < 2 || err <= 1e-24 {
        return Ok(None);
    }
    let n = dict.num_atoms();
    let mut corr = vec![0.0; n];
    dict.correlate_into(x, &mut corr);
    let mut order: Vec<usize> = (0..n).collect();
    let top = (BRANCHES + 1).min(n);
    order.select_nth_unstable_by(top - 1, |&a, &b| corr[b].abs().total_cmp(&corr[a].abs()));
    order.truncate(top);
    order.sort_by(|&a, &b| corr[b].abs().total_cmp(&corr[a].abs()).then(a.cmp(&b)));
    let mut best: Option<(Code, Vec<f64>, f64)> = None;
    // order[0] is plain pursuit's own first pick
    for &j in &order[1..] {
        let r = omp_seeded(dict, x, sparsity, &[j])?;
        let e = norm_sq(&r.residual);
        if e < best.as_ref().map_or(err, |b| b.2) {
            let code = Code {
                support: r.support,
                coeffs: r.coefficients,
            };
            best = Some((code, r.residual, e));
        }
    }
    Ok(best)
}

/// Points every unused atom at a distinct badly reconstructed sample. No
/// code refers to these atoms, so the objective is unchanged.
fn reseed_unused(samples: &[Vec<f64>], dict: &mut AtomDictionary, codes: &[Code], errors: &[f64]) -> usize {
    let mut used = vec![false; dict.num_atoms()];
    for c in codes {
        for &j in &c.support {
            used[j] = true;
        }
    }
    let mut order: Vec<usize> = (0..errors.len()).filter(|&i| errors[i] > 0.0).collect();
    order.sort_by(|&a, &b| errors[b].total_cmp(&errors[a]));
    let mut worst = order.into_iter();
    let mut n = 0;
    for k in (0..used.len()).filter(|&k| !used[k]) {
        let Some(s) = worst.next() else { break };
        let norm = norm_sq(&samples[s]).sqrt();
        let atom: Vec<f64> = samples[s].iter().map(|v| v / norm).collect();
        dict.set_atom(k, &atom);
        n += 1;
    }
    n
}

/// Tries replacing each of the few atoms whose removal costs least with the
/// principal direction of the worst residuals. After recoding every sample
/// and refitting the new atom to its users, the best candidate is kept only
/// if the total error drops; otherwise nothing changes.
fn try_swap(
    samples: &[Vec<f64>],
    dict: &mut AtomDictionary,
    codes: &mut Vec<Code>,
    residuals: &mut Vec<Vec<f64>>,
    errors: &mut Vec<f64>,
    sparsity: usize,
) -> Result<bool> {
    const CANDIDATES: usize = 4;
    let (d, n, m) = (dict.dim(), dict.num_atoms(), samples.len());
    if n < 2 || m == 0 {
        return Ok(false);
    }
    let mut cost = vec![0.0; n];
    for (i, c) in codes.iter().enumerate() {
        for (&j, &a) in c.support.iter().zip(&c.coeffs) {
            let grown: f64 = residuals[i].iter().zip(dict.atom(j)).map(|(r, v)| (r + a * v).powi(2)).sum();
            cost[j] += grown - errors[i];
        }
    }
    let mut atoms: Vec<usize> = (0..n).collect();
    atoms.sort_by(|&a, &b| cost[a].total_cmp(&cost[b]));
    atoms.truncate(CANDIDATES);

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| errors[b].total_cmp(&errors[a]));
    let q = (m / n).max(sparsity + 1).min(m);
    let worst = &order[..q];
    if errors[worst[0]] <= 0.0 {
        return Ok(false);
    }
    let mut e = DMatrix::zeros(d, q);
    for (col, &i) in worst.iter().enumerate() {
        for r in 0..d {
            e[(r, col)] = residuals[i][r];
        }
    }
    let Some((u, _)) = rank_one(e) else { return Ok(false) };

    let before: f64 = errors.iter().sum();
    let mut best: Option<(f64, AtomDictionary, Vec<Code>, Vec<Vec<f64>>, Vec<f64>)> = None;
    for &k in &atoms {
        let mut trial = dict.clone();
        trial.set_atom(k, &u);
        let fresh = par::try_map_range(m, |i| omp_detailed(&trial, &samples[i], sparsity))?;
        let mut c2 = codes.clone();
        let mut r2 = residuals.clone();
        let mut e2 = errors.clone();
        for (i, res) in fresh.into_iter().enumerate() {
            let err = norm_sq(&res.residual);
            if err < e2[i] || codes[i].support.contains(&k) {
                e2[i] = err;
                r2[i] = res.residual;
                c2[i] = Code {
                    support: res.support,
                    coeffs: res.coefficients,
                };
            }
        }
        update_atom(&mut trial, k, &mut c2, &mut r2, &mut e2);
        let after: f64 = e2.iter().sum();
        if after < best.as_ref().map_or(before, |b| b.0) {
            best = Some((after, trial, c2, r2, e2));
        }
    }
    match best {
        Some((_, dn, c2, r2, e2)) => {
            *dict = dn;
            *codes = c2;
            *residuals = r2;
            *errors = e2;
            Ok(true)
        }
        None => Ok(false),
    }
}

/// Rank-1 refit of atom `k` and its coefficients over the samples using it.
fn update_atom(
    dict: &mut AtomDictionary,
    k: usize,
    codes: &mut [Code],
    residuals: &mut [Vec<f64>],
    errors: &mut [f64],
) {
    let d = dict.dim();
    let used_by: Vec<(usize, usize)> = codes
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.support.iter().position(|&j| j == k).map(|slot| (i, slot)))
        .collect();
    if used_by.is_empty() {
        return;
    }
    // E_k^R: residual plus this atom's current contribution.
    let atom = dict.atom(k).to_vec();
    let mut e = DMatrix::zeros(d, used_by.len());
    for (col, &(i, slot)) in used_by.iter().enumerate() {
        let c = codes[i].coeffs[slot];
        for r in 0..d {
            e[(r, col)] = residuals[i][r] + c * atom[r];
        }
    }
    let Some((u, sv)) = rank_one(e.clone()) else { return };
    dict.set_atom(k, &u);
    for (col, &(i, slot)) in used_by.iter().enumerate() {
        let c = sv[col];
        codes[i].coeffs[slot] = c;
        for r in 0..d {
            residuals[i][r] = e[(r, col)] - c * u[r];
        }
        errors[i] = norm_sq(&residuals[i]);
    }
}

/// Leading left singular vector and `sigma_1 * v_1` of `e`.
fn rank_one(e: DMatrix<f64>) -> Option<(Vec<f64>, Vec<f64>)> {
    let svd = e.svd(true, true);
    let (idx, &sigma) = svd
        .singular_values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    if sigma <= 0.0 || !sigma.is_finite() {
        return None;
    }
    let u = svd.u?.column(idx).iter().copied().collect();
    let v_t = svd.v_t?;
    let sv = v_t.row(idx).iter().map(|v| v * sigma).collect();
    Some((u, sv))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_samples(m: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = crate::seeded_rng(seed);
        (0..m)
            .map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect()
    }

    #[test]
    fn objective_is_monotone_and_atoms_unit() {
        let ys = gaussian_samples(300, 8, 4);
        let cfg = KsvdConfig {
            num_atoms: 16,
            sparsity: 2,
            max_iters: 10,
            tol: 0.0,
            seed: 9,
        };
        let out = ksvd_train_detailed(&ys, &cfg).unwrap();
        for w in out.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-6, "{:?}", out.objective_trace);
        }
        for col in out.dictionary.atoms().column_iter() {
            assert!((col.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let ys = gaussian_samples(200, 6, 1);
        let cfg = KsvdConfig {
            num_atoms: 12,
            sparsity: 2,
            max_iters: 5,
            tol: 0.0,
            seed: 3,
        };
        let a = ksvd_train(&ys, &cfg).unwrap();
        let b = ksvd_train(&ys, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_samples_are_an_error() {
        assert!(ksvd_train(&[], &KsvdConfig::default()).is_err());
    }

    #[test]
    fn spare_atoms_do_not_break_exact_fit() {
        // Three distinct directions and many spare atoms: most atoms go unused.
        let mut ys = Vec::new();
        for i in 0..60 {
            let mut v = vec![0.0; 4];
            v[i % 3] = 1.0 + i as f64 * 0.01;
            ys.push(v);
        }
        let cfg = KsvdConfig {
            num_atoms: 8,
            sparsity: 1,
            max_iters: 3,
            tol: 0.0,
            seed: 0,
        };
        let out = ksvd_train_detailed(&ys, &cfg).unwrap();
        assert!(out.objective_trace.last().unwrap() < &1e-18);
        for col in out.dictionary.atoms().column_iter() {
            assert!((col.norm() - 1.0).abs() < 1e-9);
        }
    }
}
