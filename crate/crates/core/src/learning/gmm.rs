use std::f64::consts::PI;

use super::kmeans::kmeans_detailed;
use super::sample_dim;
use crate::error::{LsedError, Result};
use crate::par;
use crate::util::log_sum_exp;

/// Lower bound applied to every diagonal covariance entry.
pub const COVARIANCE_FLOOR: f64 = 1e-6;

const CHUNK: usize = 512;

/// Diagonal-covariance Gaussian mixture. Means and variances are stored
/// row-major, one `d`-vector per component.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    dim: usize,
    weights: Vec<f64>,
    means: Vec<f64>,
    variances: Vec<f64>,
}

impl MixtureModel {
    pub fn new(dim: usize, weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        let n = weights.len();
        if n == 0 || dim == 0 {
            return Err(LsedError::Empty("mixture"));
        }
        if means.len() != n * dim {
            return Err(LsedError::dims(n * dim, means.len()));
        }
        if variances.len() != n * dim {
            return Err(LsedError::dims(n * dim, variances.len()));
        }
        if weights.iter().chain(&means).chain(&variances).any(|v| !v.is_finite()) {
            return Err(LsedError::Numerical("non-finite mixture parameter".into()));
        }
        if weights.iter().any(|&w| w < 0.0) {
            return Err(LsedError::Numerical("negative mixture weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(LsedError::Numerical(format!("mixture weights sum to {total}")));
        }
        if variances.iter().any(|&v| v <= 0.0) {
            return Err(LsedError::Numerical("non-positive variance".into()));
        }
        Ok(MixtureModel {
            dim,
            weights,
            means,
            variances,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn mean(&self, n: usize) -> &[f64] {
        &self.means[n * self.dim..(n + 1) * self.dim]
    }

    pub fn variance(&self, n: usize) -> &[f64] {
        &self.variances[n * self.dim..(n + 1) * self.dim]
    }

    /// Per-component constant `log w_n - 0.5 * sum_j log(2 pi var_nj)`.
    pub(crate) fn log_norms(&self) -> Vec<f64> {
        (0..self.num_components())
            .map(|n| {
                let log_det: f64 = self.variance(n).iter().map(|v| (2.0 * PI * v).ln()).sum();
                self.weights[n].ln() - 0.5 * log_det
            })
            .collect()
    }

    /// `log(w_n p(x | n))` for every component, given precomputed [`Self::log_norms`].
    pub(crate) fn joint_log_densities(&self, x: &[f64], log_norms: &[f64], out: &mut [f64]) {
        for (n, o) in out.iter_mut().enumerate() {
            let mu = self.mean(n);
            let var = self.variance(n);
            let mut q = 0.0;
            for j in 0..self.dim {
                let diff = x[j] - mu[j];
                q += diff * diff / var[j];
            }
            *o = log_norms[n] - 0.5 * q;
        }
    }

    /// Mean per-sample log-likelihood of `samples`.
    pub fn mean_log_likelihood(&self, samples: &[Vec<f64>]) -> Result<f64> {
        let stats = self.e_step(samples, false)?;
        Ok(stats.log_likelihood / samples.len() as f64)
    }

    fn e_step(&self, samples: &[Vec<f64>], accumulate: bool) -> Result<SuffStats> {
        let d = self.dim;
        let k = self.num_components();
        let log_norms = self.log_norms();
        let chunks = samples.len().div_ceil(CHUNK);
        let partials = par::map_range(chunks, |c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(samples.len());
            let mut st = SuffStats::zeros(if accumulate { k } else { 0 }, d);
            let mut logp = vec![0.0; k];
            for x in &samples[lo..hi] {
                self.joint_log_densities(x, &log_norms, &mut logp);
                let lse = log_sum_exp(&logp);
                st.log_likelihood += lse;
                if !accumulate {
                    continue;
                }
                for n in 0..k {
                    let g = (logp[n] - lse).exp();
                    if g == 0.0 {
                        continue;
                    }
                    st.resp[n] += g;
                    let mu = self.mean(n);
                    let s1 = &mut st.first[n * d..(n + 1) * d];
                    let s2 = &mut st.second[n * d..(n + 1) * d];
                    for j in 0..d {
                        let diff = x[j] - mu[j];
                        s1[j] += g * diff;
                        s2[j] += g * diff * diff;
                    }
                }
            }
            st
        });
        let mut total = SuffStats::zeros(if accumulate { k } else { 0 }, d);
        for p in partials {
            total.add(&p);
        }
        if !total.log_likelihood.is_finite() {
            return Err(LsedError::Numerical("mixture log-likelihood is not finite".into()));
        }
        Ok(total)
    }
}

/// Responsibility-weighted sums, centred on the current means.
struct SuffStats {
    log_likelihood: f64,
    resp: Vec<f64>,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl SuffStats {
    fn zeros(k: usize, d: usize) -> Self {
        SuffStats {
            log_likelihood: 0.0,
            resp: vec![0.0; k],
            first: vec![0.0; k * d],
            second: vec![0.0; k * d],
        }
    }

    fn add(&mut self, other: &SuffStats) {
        self.log_likelihood += other.log_likelihood;
        for (a, b) in self.resp.iter_mut().zip(&other.resp) {
            *a += b;
        }
        for (a, b) in self.first.iter_mut().zip(&other.first) {
            *a += b;
        }
        for (a, b) in self.second.iter_mut().zip(&other.second) {
            *a += b;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmConfig {
    pub components: usize,
    pub max_iters: usize,
    /// Relative change in log-likelihood below which training stops.
    pub tol: f64,
    pub covariance_floor: f64,
    pub kmeans_iters: usize,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            components: 1024,
            max_iters: 100,
            tol: 1e-6,
            covariance_floor: COVARIANCE_FLOOR,
            kmeans_iters: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmOutcome {
    pub model: MixtureModel,
    /// Mean per-sample log-likelihood of every evaluated model, starting
    /// with the k-means initialisation.
    pub log_likelihood_trace: Vec<f64>,
}

pub fn em_train(samples: &[Vec<f64>], components: usize, seed: u64) -> Result<MixtureModel> {
    let cfg = EmConfig {
        components,
        seed,
        ..Default::default()
    };
    Ok(em_train_detailed(samples, &cfg)?.model)
}

/// Diagonal-covariance EM initialised from k-means.
pub fn em_train_detailed(samples: &[Vec<f64>], cfg: &EmConfig) -> Result<EmOutcome> {
    let d = sample_dim(samples)?;
    let m = samples.len();
    let k = cfg.components;
    if k == 0 || k > m {
        return Err(LsedError::config(format!(
            "cannot fit {k} components to {m} samples"
        )));
    }
    let floor = cfg.covariance_floor.max(f64::MIN_POSITIVE);
    let mut model = init_from_kmeans(samples, d, k, cfg.kmeans_iters, cfg.seed, floor)?;
    let mut trace = Vec::new();

    for iter in 0..cfg.max_iters.max(1) {
        let stats = model.e_step(samples, true)?;
        let ll = stats.log_likelihood / m as f64;
        trace.push(ll);
        if trace.len() >= 2 {
            let prev = trace[trace.len() - 2];
            if (ll - prev).abs() <= cfg.tol * prev.abs().max(1e-300) {
                break;
            }
        }
        if iter + 1 == cfg.max_iters {
            // the trace already holds the likelihood of the returned model
            break;
        }
        model = m_step(&model, &stats, floor);
    }

    Ok(EmOutcome {
        model,
        log_likelihood_trace: trace,
    })
}

fn m_step(model: &MixtureModel, stats: &SuffStats, floor: f64) -> MixtureModel {
    let d = model.dim;
    let k = model.num_components();
    let total: f64 = stats.resp.iter().sum();
    let mut weights: Vec<f64> = stats.resp.iter().map(|r| r / total).collect();
    let wsum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= wsum);
    let mut means = model.means.clone();
    let mut variances = model.variances.clone();
    for n in 0..k {
        let r = stats.resp[n];
        if r < 1e-12 {
            continue;
        }
        for j in 0..d {
            let shift = stats.first[n * d + j] / r;
            means[n * d + j] += shift;
            let var = stats.second[n * d + j] / r - shift * shift;
            variances[n * d + j] = var.max(floor);
        }
    }
    MixtureModel {
        dim: d,
        weights,
        means,
        variances,
    }
}

fn init_from_kmeans(
    samples: &[Vec<f64>],
    d: usize,
    k: usize,
    iters: usize,
    seed: u64,
    floor: f64,
) -> Result<MixtureModel> {
    let km = kmeans_detailed(samples, k, iters, seed)?;
    let m = samples.len() as f64;
    let mut global_mean = vec![0.0; d];
    for s in samples {
        for (g, v) in global_mean.iter_mut().zip(s) {
            *g += v / m;
        }
    }
    let mut global_var = vec![0.0; d];
    for s in samples {
        for j in 0..d {
            global_var[j] += (s[j] - global_mean[j]).powi(2) / m;
        }
    }
    let mut counts = vec![0usize; k];
    let mut sq = vec![0.0; k * d];
    for (s, &a) in samples.iter().zip(&km.assignments) {
        counts[a] += 1;
        for j in 0..d {
            sq[a * d + j] += (s[j] - km.centroids[a][j]).powi(2);
        }
    }
    let mut variances = vec![0.0; k * d];
    for n in 0..k {
        for j in 0..d {
            variances[n * d + j] = if counts[n] >= 2 {
                sq[n * d + j] / counts[n] as f64
            } else {
                global_var[j]
            }
            .max(floor);
        }
    }
    // empty clusters still get a little mass so every component stays alive
    let raw: Vec<f64> = counts.iter().map(|&c| c.max(1) as f64).collect();
    let total: f64 = raw.iter().sum();
    let weights = raw.iter().map(|c| c / total).collect();
    let means = km.centroids.concat();
    Ok(MixtureModel {
        dim: d,
        weights,
        means,
        variances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn single_gaussian_recovers_sample_moments() {
        let mut rng = crate::seeded_rng(2);
        let g = Normal::new(3.0, 2.0).unwrap();
        let ys: Vec<Vec<f64>> = (0..2000)
            .map(|_| vec![g.sample(&mut rng), g.sample(&mut rng) - 5.0])
            .collect();
        let model = em_train(&ys, 1, 0).unwrap();
        assert_eq!(model.weights(), &[1.0]);
        for j in 0..2 {
            let mean = ys.iter().map(|y| y[j]).sum::<f64>() / 2000.0;
            let var = ys.iter().map(|y| (y[j] - mean).powi(2)).sum::<f64>() / 2000.0;
            let se = (var / 2000.0).sqrt();
            assert!((model.mean(0)[j] - mean).abs() < 3.0 * se);
            assert!((model.variance(0)[j] - var).abs() < 1e-9 * var.max(1.0));
        }
    }

    #[test]
    fn two_gaussians_recover_proportions() {
        let mut rng = crate::seeded_rng(3);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut ys = Vec::new();
        for i in 0..1000 {
            let c = if i < 300 { -8.0 } else { 8.0 };
            ys.push(vec![c + noise.sample(&mut rng), noise.sample(&mut rng)]);
        }
        let model = em_train(&ys, 2, 11).unwrap();
        let mut w = model.weights().to_vec();
        w.sort_by(f64::total_cmp);
        assert!((w[0] - 0.3).abs() < 0.05 && (w[1] - 0.7).abs() < 0.05, "{w:?}");
        assert!((model.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_likelihood_is_non_decreasing() {
        let mut rng = crate::seeded_rng(4);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let ys: Vec<Vec<f64>> = (0..600)
            .map(|_| (0..3).map(|_| { let v: f64 = noise.sample(&mut rng); v.powi(3) }).collect())
            .collect();
        let cfg = EmConfig {
            components: 6,
            max_iters: 60,
            tol: 0.0,
            ..Default::default()
        };
        let out = em_train_detailed(&ys, &cfg).unwrap();
        for w in out.log_likelihood_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-8, "{:?}", out.log_likelihood_trace);
        }
    }

    #[test]
    fn identical_samples_get_floored_covariances() {
        let ys = vec![vec![1.0, -1.0, 0.5]; 50];
        let model = em_train(&ys, 2, 0).unwrap();
        assert!(model.variances().iter().all(|&v| v >= COVARIANCE_FLOOR));
        assert!(model.variances().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn invalid_models_are_rejected() {
        assert!(MixtureModel::new(1, vec![0.5, 0.6], vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(MixtureModel::new(1, vec![1.0], vec![0.0], vec![0.0]).is_err());
    }

    #[test]
    fn log_sum_exp_is_stable() {
        assert!((log_sum_exp(&[-1000.0, -1000.0]) - (-1000.0 + 2f64.ln())).abs() < 1e-12);
    }
}
