use rand::Rng;

use super::sample_dim;
use crate::error::{LsedError, Result};
use crate::par;

const DEFAULT_MAX_ITERS: usize = 100;

#[derive(Debug, Clone)]
pub struct KMeansOutcome {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Within-cluster sum of squares after each assignment step.
    pub objective_trace: Vec<f64>,
}

/// Cluster centres used to initialise mixture training.
pub fn kmeans(samples: &[Vec<f64>], k: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    Ok(kmeans_detailed(samples, k, DEFAULT_MAX_ITERS, seed)?.centroids)
}

/// Lloyd's algorithm from a k-means++ seeding. Clusters that end up empty are
/// re-seeded with the points farthest from their current centres.
pub fn kmeans_detailed(samples: &[Vec<f64>], k: usize, max_iters: usize, seed: u64) -> Result<KMeansOutcome> {
    let d = sample_dim(samples)?;
    let m = samples.len();
    if k == 0 || k > m {
        return Err(LsedError::config(format!(
            "cannot form {k} clusters from {m} samples"
        )));
    }
    let mut rng = crate::seeded_rng(seed);
    let mut centroids = plus_plus_init(samples, k, &mut rng);
    let mut assignments = vec![usize::MAX; m];
    let mut trace = Vec::new();

    for _ in 0..max_iters.max(1) {
        let nearest = par::map_range(m, |i| nearest_centroid(&samples[i], &centroids));
        let changed = nearest
            .iter()
            .zip(&assignments)
            .any(|(&(c, _), &a)| c != a);
        let objective: f64 = nearest.iter().map(|&(_, dist)| dist).sum();
        trace.push(objective);
        for (a, &(c, _)) in assignments.iter_mut().zip(&nearest) {
            *a = c;
        }
        if !changed {
            break;
        }

        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (s, &a) in samples.iter().zip(&assignments) {
            counts[a] += 1;
            for (acc, v) in sums[a].iter_mut().zip(s) {
                *acc += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                centroids[c] = sums[c].iter().map(|v| v * inv).collect();
            }
        }
        let empty: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
        if !empty.is_empty() {
            let mut order: Vec<usize> = (0..m).collect();
            let dist: Vec<f64> = (0..m)
                .map(|i| sq_dist(&samples[i], &centroids[assignments[i]]))
                .collect();
            order.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));
            for (c, &i) in empty.iter().zip(&order) {
                centroids[*c] = samples[i].clone();
            }
        }
    }

    Ok(KMeansOutcome {
        centroids,
        assignments,
        objective_trace: trace,
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest_centroid(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, mu) in centroids.iter().enumerate() {
        let dist = sq_dist(x, mu);
        if dist < best.1 {
            best = (c, dist);
        }
    }
    best
}

fn plus_plus_init(samples: &[Vec<f64>], k: usize, rng: &mut crate::SeededRng) -> Vec<Vec<f64>> {
    let m = samples.len();
    let mut chosen = vec![false; m];
    let first = rng.random_range(0..m);
    chosen[first] = true;
    let mut centroids = vec![samples[first].clone()];
    let mut dist: Vec<f64> = samples.iter().map(|s| sq_dist(s, &samples[first])).collect();
    while centroids.len() < k {
        let total: f64 = dist
            .iter()
            .zip(&chosen)
            .filter(|(_, &c)| !c)
            .map(|(d, _)| d)
            .sum();
        let pick = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut pick = None;
            for i in 0..m {
                if chosen[i] || dist[i] == 0.0 {
                    continue;
                }
                pick = Some(i);
                if target < dist[i] {
                    break;
                }
                target -= dist[i];
            }
            pick.expect("positive total implies a candidate")
        } else {
            // every remaining point duplicates a centre
            let free: Vec<usize> = (0..m).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        for (i, dd) in dist.iter_mut().enumerate() {
            *dd = dd.min(sq_dist(&samples[i], &samples[pick]));
        }
        centroids.push(samples[pick].clone());
    }
    centroids
}
