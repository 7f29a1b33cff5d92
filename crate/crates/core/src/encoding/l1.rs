//! Minimum-l1 coding under a residual bound,
//! `min ||a||_1  s.t.  ||D a - x||^2 <= epsilon`,
//! solved by following the lasso regularisation path from `lambda_max`
//! down to the point where the residual bound becomes active.

use nalgebra::{DMatrix, DVector};

use crate::error::{LsedError, Result};
use crate::learning::AtomDictionary;
use crate::util::{dot, norm_sq};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L1EncoderConfig {
    /// Bound on the squared reconstruction error.
    pub epsilon: f64,
    /// Cap on the number of path breakpoints.
    pub max_steps: usize,
    /// Atoms whose addition drives the active Gram matrix's Cholesky pivot
    /// below this are skipped as numerically dependent.
    pub pivot_tol: f64,
}

impl Default for L1EncoderConfig {
    fn default() -> Self {
        L1EncoderConfig {
            epsilon: 0.1,
            max_steps: 4096,
            pivot_tol: 1e-7,
        }
    }
}

impl L1EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(LsedError::config("epsilon must be positive and finite"));
        }
        if self.max_steps == 0 {
            return Err(LsedError::config("max_steps must be >= 1"));
        }
        Ok(())
    }
}

/// Raw solver output.
#[derive(Debug, Clone, PartialEq)]
pub struct L1Solution {
    pub coefficients: Vec<f64>,
    pub residual_sq: f64,
    /// Penalty weight of the equivalent lasso problem at the returned point.
    pub lambda: f64,
    pub steps: usize,
    /// The bound could not be met; the returned point is the end of the path.
    pub constraint_unmet: bool,
}

// Target a hair below epsilon so rounding never leaves the bound violated.
const EPS_SAFETY: f64 = 1e-10;

pub fn solve_l1(dict: &AtomDictionary, x: &[f64], cfg: &L1EncoderConfig) -> Result<L1Solution> {
    let d = dict.dim();
    let n = dict.num_atoms();
    if x.len() != d {
        return Err(LsedError::dims(d, x.len()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LsedError::Numerical("non-finite probe".into()));
    }
    let target = cfg.epsilon * (1.0 - EPS_SAFETY);
    let mut coef = vec![0.0; n];
    let mut r = x.to_vec();
    let mut rr = norm_sq(&r);
    if rr <= cfg.epsilon {
        return Ok(L1Solution {
            coefficients: coef,
            residual_sq: rr,
            lambda: f64::INFINITY,
            steps: 0,
            constraint_unmet: false,
        });
    }

    let mut c = vec![0.0; n];
    dict.correlate_into(&r, &mut c);
    let mut blocked = vec![false; n];
    let mut active: Vec<usize> = Vec::new();
    let mut in_active = vec![false; n];

    let first = argmax_abs(&c, &blocked, &in_active).ok_or(LsedError::Empty("dictionary"))?;
    let mut lambda = c[first].abs();
    active.push(first);
    in_active[first] = true;
    let mut just_dropped: Option<usize> = None;
    let mut a = vec![0.0; n];
    let mut steps = 0;

    loop {
        steps += 1;
        // direction on the active set: G_A dir = sign(c_A)
        let k = active.len();
        let mut gram = DMatrix::zeros(k, k);
        for (p, &i) in active.iter().enumerate() {
            for (q, &j) in active.iter().enumerate().skip(p) {
                let g = dot(dict.atom(i), dict.atom(j));
                gram[(p, q)] = g;
                gram[(q, p)] = g;
            }
        }
        let signs = DVector::from_iterator(k, active.iter().map(|&i| c[i].signum()));
        let chol = match gram.cholesky() {
            Some(ch) if min_pivot(ch.l_dirty(), k) >= cfg.pivot_tol => ch,
            _ => {
                // the newest atom is numerically dependent on the others
                let bad = active.pop().expect("active set is non-empty");
                in_active[bad] = false;
                blocked[bad] = true;
                coef[bad] = 0.0;
                if active.is_empty() {
                    match argmax_abs(&c, &blocked, &in_active) {
                        Some(j) => {
                            active.push(j);
                            in_active[j] = true;
                            continue;
                        }
                        None => break,
                    }
                }
                continue;
            }
        };
        let dir = chol.solve(&signs);
        let mut u = vec![0.0; d];
        for (p, &i) in active.iter().enumerate() {
            for (ui, ai) in u.iter_mut().zip(dict.atom(i)) {
                *ui += dir[p] * ai;
            }
        }
        dict.correlate_into(&u, &mut a);

        // first breakpoint along gamma in (0, lambda]
        let mut gamma = lambda;
        let mut event = Event::PathEnd;
        for j in 0..n {
            if in_active[j] || blocked[j] || Some(j) == just_dropped {
                continue;
            }
            for g in [join_gamma(lambda, c[j], a[j]), join_gamma(lambda, -c[j], -a[j])].into_iter().flatten() {
                if g < gamma {
                    gamma = g;
                    event = Event::Join(j);
                }
            }
        }
        for (p, &i) in active.iter().enumerate() {
            if dir[p] != 0.0 && coef[i] != 0.0 {
                let g = -coef[i] / dir[p];
                if g > 0.0 && g < gamma {
                    gamma = g;
                    event = Event::Drop(p);
                }
            }
        }
        // residual bound: ||r - g u||^2 = target
        let uu = norm_sq(&u);
        let ru = dot(&r, &u);
        if let Some(g) = smallest_root(uu, -2.0 * ru, rr - target) {
            if g <= gamma {
                gamma = g;
                event = Event::Constraint;
            }
        }

        for (p, &i) in active.iter().enumerate() {
            coef[i] += gamma * dir[p];
        }
        lambda -= gamma;
        just_dropped = None;
        match event {
            Event::Join(j) => {
                active.push(j);
                in_active[j] = true;
            }
            Event::Drop(p) => {
                let i = active.remove(p);
                in_active[i] = false;
                coef[i] = 0.0;
                just_dropped = Some(i);
            }
            Event::Constraint | Event::PathEnd => {}
        }

        r = residual(dict, x, &coef, &active);
        rr = norm_sq(&r);
        if matches!(event, Event::Constraint) || rr <= cfg.epsilon {
            break;
        }
        if matches!(event, Event::PathEnd) || lambda <= 0.0 || steps >= cfg.max_steps {
            break;
        }
        dict.correlate_into(&r, &mut c);
    }

    Ok(L1Solution {
        coefficients: coef,
        residual_sq: rr,
        lambda: lambda.max(0.0),
        steps,
        constraint_unmet: rr > cfg.epsilon,
    })
}

enum Event {
    Join(usize),
    Drop(usize),
    Constraint,
    PathEnd,
}

fn residual(dict: &AtomDictionary, x: &[f64], coef: &[f64], active: &[usize]) -> Vec<f64> {
    let mut r = x.to_vec();
    for &i in active {
        let w = coef[i];
        for (ri, ai) in r.iter_mut().zip(dict.atom(i)) {
            *ri -= w * ai;
        }
    }
    r
}

/// Step at which inactive correlation `c - g a` reaches `lambda - g`.
fn join_gamma(lambda: f64, c: f64, a: f64) -> Option<f64> {
    let den = 1.0 - a;
    if den <= 1e-12 {
        return None;
    }
    let g = (lambda - c) / den;
    // rounding can put an atom that is already at the boundary slightly
    // on the wrong side
    Some(g.max(0.0)).filter(|g| g.is_finite())
}

/// Smallest non-negative root of `a g^2 + b g + c` (with `c > 0`, `b <= 0`).
fn smallest_root(a: f64, b: f64, c: f64) -> Option<f64> {
    if a <= 0.0 {
        return None;
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    // numerically stable form of (-b - sqrt(disc)) / 2a
    let q = -0.5 * (b - disc.sqrt());
    if q <= 0.0 {
        return None;
    }
    let g = c / q;
    (g >= 0.0).then_some(g)
}

fn argmax_abs(c: &[f64], blocked: &[bool], active: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for j in 0..c.len() {
        if blocked[j] || active[j] {
            continue;
        }
        if best.is_none_or(|b| c[j].abs() > c[b].abs()) {
            best = Some(j);
        }
    }
    best
}

fn min_pivot(l: &DMatrix<f64>, k: usize) -> f64 {
    (0..k).map(|i| l[(i, i)]).fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn identity(d: usize) -> AtomDictionary {
        AtomDictionary::new(DMatrix::identity(d, d)).unwrap()
    }

    fn soft_threshold_oracle(x: &[f64], eps: f64) -> Vec<f64> {
        // find t with sum min(|x_i|, t)^2 = eps by bisection
        let (mut lo, mut hi) = (0.0, x.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        for _ in 0..200 {
            let t = 0.5 * (lo + hi);
            let e: f64 = x.iter().map(|v| v.abs().min(t).powi(2)).sum();
            if e > eps {
                hi = t;
            } else {
                lo = t;
            }
        }
        x.iter().map(|v| v.signum() * (v.abs() - lo).max(0.0)).collect()
    }

    #[test]
    fn identity_tiny_epsilon_reproduces_input() {
        let cfg = L1EncoderConfig {
            epsilon: 1e-12,
            ..Default::default()
        };
        let x = [0.3, -1.2, 0.05, 2.0];
        let s = solve_l1(&identity(4), &x, &cfg).unwrap();
        for (a, b) in s.coefficients.iter().zip(&x) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn identity_matches_soft_threshold() {
        let x = [1.0, 0.2, 0.0];
        for eps in [0.01, 0.05, 0.1, 0.5] {
            let cfg = L1EncoderConfig {
                epsilon: eps,
                ..Default::default()
            };
            let s = solve_l1(&identity(3), &x, &cfg).unwrap();
            let want = soft_threshold_oracle(&x, eps);
            for (a, b) in s.coefficients.iter().zip(&want) {
                assert!((a - b).abs() < 1e-5, "eps {eps}: {:?} vs {want:?}", s.coefficients);
            }
        }
    }

    #[test]
    fn small_input_is_coded_as_zero() {
        let s = solve_l1(&identity(3), &[0.1, 0.1, 0.1], &L1EncoderConfig::default()).unwrap();
        assert!(s.coefficients.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bound_holds_on_random_overcomplete_instances() {
        let mut rng = crate::seeded_rng(5);
        let cols: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let dict = AtomDictionary::from_columns_normalized(&cols).unwrap();
        let cfg = L1EncoderConfig::default();
        for _ in 0..200 {
            let x: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
            let s = solve_l1(&dict, &x, &cfg).unwrap();
            assert!(!s.constraint_unmet);
            let r: f64 = dict
                .reconstruct(&s.coefficients)
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            assert!(r <= cfg.epsilon, "{r}");
            assert!(r > 0.5 * cfg.epsilon, "constraint should be active: {r}");
        }
    }

    #[test]
    fn duplicate_atoms_do_not_break_the_path() {
        let cols = vec![
            vec![1.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![1.0, 1e-12, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 1.0, 1.0],
        ];
        let dict = AtomDictionary::from_columns_normalized(&cols).unwrap();
        let x = [2.0, 1.0, 0.5];
        let s = solve_l1(&dict, &x, &L1EncoderConfig::default()).unwrap();
        assert!(s.residual_sq <= 0.1);
    }

    #[test]
    fn unreachable_bound_is_flagged() {
        // the dictionary spans only the first axis
        let dict = AtomDictionary::from_columns_normalized(&[vec![1.0, 0.0]]).unwrap();
        let s = solve_l1(&dict, &[3.0, 1.0], &L1EncoderConfig::default()).unwrap();
        assert!(s.constraint_unmet);
        assert!((s.coefficients[0] - 3.0).abs() < 1e-12);
        assert!((s.residual_sq - 1.0).abs() < 1e-12);
    }
}
