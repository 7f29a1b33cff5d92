use std::collections::HashSet;

use rand::Rng;
use rand_distr::StandardNormal;

use super::protocol::{generate_trials, run_verification, TrialList};
use crate::encoding::{solve_l1, L1EncoderConfig};
use crate::error::{LsedError, Result};
use crate::learning::AtomDictionary;
use crate::matching::{sr_distance, SrDistance};
use crate::par;
use crate::util::derive_seed;

/// Gaussian classes in a low-dimensional space, used to compare raw
/// Euclidean matching against sparse codes over a dictionary built from
/// other classes.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticClassConfig {
    pub num_classes: usize,
    pub dim: usize,
    pub samples_per_class: usize,
    /// Classes whose samples form the dictionary.
    pub train_classes: usize,
    /// Norm of every class mean.
    pub mean_radius: f64,
    /// Per-axis standard deviations, as multiples of the smallest one
    /// (which is a twelfth of the closest mean spacing).
    pub sigma_multipliers: Vec<f64>,
    pub folds: usize,
    pub pairs_per_fold: usize,
    pub l1: L1EncoderConfig,
    pub code_distance: SrDistance,
    pub seed: u64,
}

impl Default for SyntheticClassConfig {
    fn default() -> Self {
        SyntheticClassConfig {
            num_classes: 232,
            dim: 16,
            samples_per_class: 128,
            train_classes: 32,
            mean_radius: 1.0,
            sigma_multipliers: vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0],
            folds: 5,
            pairs_per_fold: 400,
            l1: L1EncoderConfig::default(),
            code_distance: SrDistance::Hamming,
            seed: 0,
        }
    }
}

impl SyntheticClassConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train_classes == 0 || self.train_classes >= self.num_classes {
            return Err(LsedError::config("train_classes must lie in [1, num_classes)"));
        }
        if self.dim == 0 || self.samples_per_class < 2 {
            return Err(LsedError::config("need dim >= 1 and at least 2 samples per class"));
        }
        if self.dim < 63 && (self.num_classes as u64) > (1u64 << self.dim) {
            return Err(LsedError::config("more classes than sign patterns"));
        }
        if self.sigma_multipliers.is_empty() || self.sigma_multipliers.iter().any(|s| !(*s > 0.0)) {
            return Err(LsedError::config("sigma multipliers must be positive"));
        }
        if !(self.mean_radius > 0.0) {
            return Err(LsedError::config("mean_radius must be positive"));
        }
        self.l1.validate()
    }
}

/// Class means and the unit-variance noise shared by every level.
#[derive(Debug, Clone)]
pub struct SyntheticClasses {
    pub dim: usize,
    pub means: Vec<Vec<f64>>,
    /// Class of every sample.
    pub labels: Vec<usize>,
    noise: Vec<Vec<f64>>,
    /// Smallest per-axis standard deviation, `min_gap / 12`.
    pub sigma_min: f64,
    pub min_gap: f64,
}

impl SyntheticClasses {
    /// Means sit on distinct random corners of a hypercube (scaled to
    /// `mean_radius`); noise draws are fixed so raising the variance only
    /// scales them.
    pub fn generate(cfg: &SyntheticClassConfig) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.dim;
        let mut rng = crate::seeded_rng(cfg.seed);
        let mut seen = HashSet::new();
        let a = cfg.mean_radius / (d as f64).sqrt();
        let mut means = Vec::with_capacity(cfg.num_classes);
        while means.len() < cfg.num_classes {
            let signs: Vec<bool> = (0..d).map(|_| rng.random_bool(0.5)).collect();
            if seen.insert(signs.clone()) {
                means.push(signs.iter().map(|&s| if s { a } else { -a }).collect::<Vec<f64>>());
            }
        }
        let mut min_gap = f64::INFINITY;
        for i in 0..means.len() {
            for j in i + 1..means.len() {
                let g: f64 = means[i].iter().zip(&means[j]).map(|(x, y)| (x - y) * (x - y)).sum();
                min_gap = min_gap.min(g.sqrt());
            }
        }
        let mut noise_rng = crate::seeded_rng(derive_seed(cfg.seed, 1));
        let m = cfg.num_classes * cfg.samples_per_class;
        let noise = (0..m)
            .map(|_| (0..d).map(|_| noise_rng.sample(StandardNormal)).collect())
            .collect();
        let labels = (0..m).map(|i| i / cfg.samples_per_class).collect();
        Ok(SyntheticClasses {
            dim: d,
            means,
            labels,
            noise,
            sigma_min: min_gap / 12.0,
            min_gap,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample(&self, i: usize, sigma: f64) -> Vec<f64> {
        self.means[self.labels[i]]
            .iter()
            .zip(&self.noise[i])
            .map(|(m, z)| m + sigma * z)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticLevel {
    pub sigma: f64,
    pub baseline_accuracy: f64,
    pub sr_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticReport {
    pub sigma_min: f64,
    pub levels: Vec<SyntheticLevel>,
}

impl SyntheticReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("sigma,baseline_accuracy,sr_accuracy\n");
        for l in &self.levels {
            s.push_str(&format!("{:e},{},{}\n", l.sigma, l.baseline_accuracy, l.sr_accuracy));
        }
        s
    }
}

/// Verification accuracy of Euclidean matching and of sparse-code matching
/// for every noise level.
pub fn run_synthetic_class_experiment(cfg: &SyntheticClassConfig) -> Result<SyntheticReport> {
    let classes = SyntheticClasses::generate(cfg)?;
    // the dictionary classes are a random subset
    let mut rng = crate::seeded_rng(derive_seed(cfg.seed, 2));
    let train: HashSet<usize> =
        rand::seq::index::sample(&mut rng, cfg.num_classes, cfg.train_classes).into_iter().collect();
    let train_idx: Vec<usize> = (0..classes.len()).filter(|&i| train.contains(&classes.labels[i])).collect();
    let test_idx: Vec<usize> = (0..classes.len()).filter(|&i| !train.contains(&classes.labels[i])).collect();
    let test_labels: Vec<usize> = test_idx.iter().map(|&i| classes.labels[i]).collect();
    let trials = generate_trials(&test_labels, cfg.folds, cfg.pairs_per_fold, derive_seed(cfg.seed, 3))?;

    let mut levels = Vec::with_capacity(cfg.sigma_multipliers.len());
    for &mult in &cfg.sigma_multipliers {
        let sigma = mult * classes.sigma_min;
        let level = run_level(&classes, &train_idx, &test_idx, &trials, sigma, cfg)?;
        log::info!(
            "sigma {sigma:.4}: baseline {:.4}, sparse codes {:.4}",
            level.baseline_accuracy,
            level.sr_accuracy
        );
        levels.push(level);
    }
    Ok(SyntheticReport {
        sigma_min: classes.sigma_min,
        levels,
    })
}

fn run_level(
    classes: &SyntheticClasses,
    train_idx: &[usize],
    test_idx: &[usize],
    trials: &TrialList,
    sigma: f64,
    cfg: &SyntheticClassConfig,
) -> Result<SyntheticLevel> {
    let atoms: Vec<Vec<f64>> = train_idx.iter().map(|&i| classes.sample(i, sigma)).collect();
    let dict = AtomDictionary::from_columns_normalized(&atoms)?;
    let x: Vec<Vec<f64>> = test_idx.iter().map(|&i| classes.sample(i, sigma)).collect();

    let baseline = run_verification(trials, |t| {
        Ok(x[t.a].iter().zip(&x[t.b]).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt())
    })?;

    // only samples that appear in a trial need a code
    let used = trials.samples();
    let coded = par::try_map_range(used.len(), |k| solve_l1(&dict, &x[used[k]], &cfg.l1))?;
    let mut slot = vec![usize::MAX; x.len()];
    for (k, &i) in used.iter().enumerate() {
        slot[i] = k;
    }
    let unmet = coded.iter().filter(|c| c.constraint_unmet).count();
    if unmet > 0 {
        log::warn!("{unmet} synthetic samples could not meet the residual bound");
    }
    let sr = run_verification(trials, |t| {
        sr_distance(
            &coded[slot[t.a]].coefficients,
            &coded[slot[t.b]].coefficients,
            cfg.code_distance,
        )
    })?;
    Ok(SyntheticLevel {
        sigma,
        baseline_accuracy: baseline.mean_accuracy,
        sr_accuracy: sr.mean_accuracy,
    })
}
