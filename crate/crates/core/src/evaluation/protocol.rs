use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{LsedError, Result};
use crate::par;
use crate::util::derive_seed;

/// A verification trial between samples `a` and `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Trial {
    pub a: usize,
    pub b: usize,
    pub same: bool,
}

/// Balanced trials grouped in identity-disjoint folds.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialList {
    trials: Vec<Trial>,
    folds: Vec<usize>,
    num_folds: usize,
}

impl TrialList {
    /// `fold_of[i]` is the fold of `trials[i]`.
    pub fn new(trials: Vec<Trial>, fold_of: Vec<usize>, num_folds: usize) -> Result<Self> {
        if trials.len() != fold_of.len() {
            return Err(LsedError::dims(trials.len(), fold_of.len()));
        }
        if num_folds < 2 {
            return Err(LsedError::Protocol("at least two folds are needed".into()));
        }
        if fold_of.iter().any(|&f| f >= num_folds) {
            return Err(LsedError::Protocol("fold index out of range".into()));
        }
        Ok(TrialList {
            trials,
            folds: fold_of,
            num_folds,
        })
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    pub fn fold_of(&self) -> &[usize] {
        &self.folds
    }

    pub fn num_folds(&self) -> usize {
        self.num_folds
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// Trials of one fold.
    pub fn fold(&self, k: usize) -> impl Iterator<Item = &Trial> {
        self.trials
            .iter()
            .zip(&self.folds)
            .filter(move |(_, &f)| f == k)
            .map(|(t, _)| t)
    }

    /// Sorted, de-duplicated sample indices referenced by any trial.
    pub fn samples(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.trials.iter().flat_map(|t| [t.a, t.b]).collect();
        s.sort_unstable();
        s.dedup();
        s
    }
}

/// Assigns identities to `num_folds` folds and draws, inside each fold,
/// `pairs_per_fold / 2` matched pairs (uniformly among all same-identity
/// pairs) and as many mismatched pairs between distinct identities.
pub fn generate_trials(
    labels: &[usize],
    num_folds: usize,
    pairs_per_fold: usize,
    seed: u64,
) -> Result<TrialList> {
    if num_folds < 2 {
        return Err(LsedError::Protocol("at least two folds are needed".into()));
    }
    let mut identities: Vec<usize> = labels.to_vec();
    identities.sort_unstable();
    identities.dedup();
    if identities.len() < 2 * num_folds {
        return Err(LsedError::Protocol(format!(
            "{} identities cannot fill {num_folds} folds with two identities each",
            identities.len()
        )));
    }
    let mut rng = crate::seeded_rng(seed);
    identities.shuffle(&mut rng);

    let mut trials = Vec::new();
    let mut fold_of = Vec::new();
    for k in 0..num_folds {
        let ids: HashSet<usize> = identities.iter().skip(k).step_by(num_folds).copied().collect();
        let members: Vec<usize> = (0..labels.len()).filter(|&i| ids.contains(&labels[i])).collect();
        let mut rng = crate::seeded_rng(derive_seed(seed, k as u64 + 1));

        let mut matched: Vec<(usize, usize)> = Vec::new();
        for (p, &i) in members.iter().enumerate() {
            for &j in &members[p + 1..] {
                if labels[i] == labels[j] {
                    matched.push((i, j));
                }
            }
        }
        if matched.is_empty() {
            return Err(LsedError::Protocol(format!("fold {k} has no identity with two samples")));
        }
        let half = (pairs_per_fold / 2).min(matched.len()).max(1);
        let (chosen, _) = matched.partial_shuffle(&mut rng, half);
        for &(i, j) in chosen.iter() {
            trials.push(Trial { a: i, b: j, same: true });
            fold_of.push(k);
        }

        let mut seen = HashSet::new();
        let mut drawn = 0;
        let mut attempts = 0usize;
        while drawn < half {
            attempts += 1;
            if attempts > 1000 * half + 10_000 {
                return Err(LsedError::Protocol(format!(
                    "fold {k} cannot supply {half} distinct mismatched pairs"
                )));
            }
            let i = members[rng.random_range(0..members.len())];
            let j = members[rng.random_range(0..members.len())];
            if labels[i] == labels[j] || !seen.insert((i.min(j), i.max(j))) {
                continue;
            }
            trials.push(Trial { a: i, b: j, same: false });
            fold_of.push(k);
            drawn += 1;
        }
    }
    TrialList::new(trials, fold_of, num_folds)
}

/// Decision threshold: a pair is judged "same" iff its score is `<= tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionThreshold {
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct ScoredTrials {
    scores: Vec<f64>,
    same: Vec<bool>,
}

impl ScoredTrials {
    fn new(scores: Vec<f64>, same: Vec<bool>) -> Result<Self> {
        if scores.len() != same.len() {
            return Err(LsedError::dims(scores.len(), same.len()));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(LsedError::Numerical("NaN score".into()));
        }
        Ok(ScoredTrials { scores, same })
    }

    fn rates(&self, tau: f64) -> ErrorRates {
        let (mut fa, mut fr, mut pos, mut neg) = (0usize, 0usize, 0usize, 0usize);
        for (&s, &same) in self.scores.iter().zip(&self.same) {
            if same {
                pos += 1;
                if s > tau {
                    fr += 1;
                }
            } else {
                neg += 1;
                if s <= tau {
                    fa += 1;
                }
            }
        }
        ErrorRates {
            far: if neg == 0 { 0.0 } else { fa as f64 / neg as f64 },
            frr: if pos == 0 { 0.0 } else { fr as f64 / pos as f64 },
        }
    }
}

/// Scores of development trials. The threshold can only be fitted on this
/// type, and evaluation-fold scores can never be turned into it.
///
/// ```compile_fail
/// use lsed::evaluation::{eer_threshold, EvalScores};
/// let eval = EvalScores::new(vec![0.1, 0.9], vec![true, false]).unwrap();
/// eer_threshold(&eval);
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct DevScores(ScoredTrials);

/// Scores of evaluation-fold trials.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalScores(ScoredTrials);

impl DevScores {
    pub fn new(scores: Vec<f64>, same: Vec<bool>) -> Result<Self> {
        ScoredTrials::new(scores, same).map(DevScores)
    }

    pub fn len(&self) -> usize {
        self.0.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.scores.is_empty()
    }

    pub fn rates(&self, tau: DecisionThreshold) -> ErrorRates {
        self.0.rates(tau.tau)
    }
}

impl EvalScores {
    pub fn new(scores: Vec<f64>, same: Vec<bool>) -> Result<Self> {
        ScoredTrials::new(scores, same).map(EvalScores)
    }

    pub fn len(&self) -> usize {
        self.0.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.scores.is_empty()
    }

    pub fn rates(&self, tau: DecisionThreshold) -> ErrorRates {
        self.0.rates(tau.tau)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRates {
    /// Mismatched pairs accepted.
    pub far: f64,
    /// Matched pairs rejected.
    pub frr: f64,
}

impl ErrorRates {
    pub fn accuracy(&self) -> f64 {
        1.0 - 0.5 * (self.far + self.frr)
    }
}

/// Threshold minimising `|FAR - FRR|` over the midpoints between adjacent
/// distinct scores; the lower threshold wins ties. A list with a single
/// distinct score yields that score.
pub fn eer_threshold(dev: &DevScores) -> Result<DecisionThreshold> {
    let s = &dev.0;
    let pos = s.same.iter().filter(|&&x| x).count();
    let neg = s.same.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(LsedError::Protocol(
            "threshold fitting needs both matched and mismatched trials".into(),
        ));
    }
    let mut order: Vec<usize> = (0..s.scores.len()).collect();
    order.sort_by(|&a, &b| s.scores[a].total_cmp(&s.scores[b]));

    // sweep: after consuming all scores <= t, accepted counts are known
    let mut best: Option<(f64, f64)> = None;
    let (mut acc_pos, mut acc_neg) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let v = s.scores[order[i]];
        while i < order.len() && s.scores[order[i]] == v {
            if s.same[order[i]] {
                acc_pos += 1;
            } else {
                acc_neg += 1;
            }
            i += 1;
        }
        if i == order.len() {
            break;
        }
        let tau = 0.5 * (v + s.scores[order[i]]);
        let far = acc_neg as f64 / neg as f64;
        let frr = (pos - acc_pos) as f64 / pos as f64;
        let gap = (far - frr).abs();
        if best.is_none_or(|(g, _)| gap < g) {
            best = Some((gap, tau));
        }
    }
    let tau = match best {
        Some((_, t)) => t,
        None => s.scores[order[0]],
    };
    Ok(DecisionThreshold { tau })
}

/// `1 - (FAR + FRR) / 2` on evaluation scores.
pub fn accuracy(eval: &EvalScores, tau: DecisionThreshold) -> f64 {
    eval.rates(tau).accuracy()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    pub threshold: DecisionThreshold,
    pub rates: ErrorRates,
    pub accuracy: f64,
    pub dev_trials: usize,
    pub eval_trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub folds: Vec<FoldResult>,
    pub mean_accuracy: f64,
}

/// Cross-validated verification: each fold in turn is the evaluation set,
/// the remaining folds are the development set on which the threshold is
/// fitted. `score` must be a distance (smaller means more alike).
pub fn run_verification<F>(trials: &TrialList, score: F) -> Result<VerificationReport>
where
    F: Fn(&Trial) -> Result<f64> + Sync,
{
    let scores = par::try_map_range(trials.len(), |i| score(&trials.trials[i]))?;
    verify_scored(trials, &scores)
}

/// As [`run_verification`], with the score of every trial precomputed.
pub fn verify_scored(trials: &TrialList, scores: &[f64]) -> Result<VerificationReport> {
    if scores.len() != trials.len() {
        return Err(LsedError::dims(trials.len(), scores.len()));
    }
    let mut folds = Vec::with_capacity(trials.num_folds);
    for k in 0..trials.num_folds {
        let split = |want_eval: bool| -> (Vec<f64>, Vec<bool>) {
            trials
                .trials
                .iter()
                .zip(&trials.folds)
                .zip(scores)
                .filter(|((_, &f), _)| (f == k) == want_eval)
                .map(|((t, _), &s)| (s, t.same))
                .unzip()
        };
        let (ds, dl) = split(false);
        let (es, el) = split(true);
        let dev = DevScores::new(ds, dl)?;
        let eval = EvalScores::new(es, el)?;
        let threshold = eer_threshold(&dev)?;
        let rates = eval.rates(threshold);
        folds.push(FoldResult {
            fold: k,
            threshold,
            rates,
            accuracy: rates.accuracy(),
            dev_trials: dev.len(),
            eval_trials: eval.len(),
        });
    }
    let mean_accuracy = folds.iter().map(|f| f.accuracy).sum::<f64>() / folds.len() as f64;
    Ok(VerificationReport { folds, mean_accuracy })
}
