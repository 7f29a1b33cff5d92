use rand::Rng;

use super::sample_dim;
use crate::error::{LsedError, Result};
use crate::par;

/// Hidden activations are clamped into `[RHO_CLAMP, 1 - RHO_CLAMP]` before
/// entering the KL penalty.
pub const RHO_CLAMP: f64 = 1e-6;

const CHUNK: usize = 256;

/// Sigmoid encoder with an untied affine decoder.
///
/// `weights` is stored hidden-unit major (`w_i` contiguous, `N * d`);
/// `decode_weights` is `N x d` row-major, so `x_hat = sum_i h_i v_i + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    dim: usize,
    hidden: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    decode_weights: Vec<f64>,
    decode_bias: Vec<f64>,
}

impl AutoencoderModel {
    pub fn new(
        dim: usize,
        hidden: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        decode_weights: Vec<f64>,
        decode_bias: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 || hidden == 0 {
            return Err(LsedError::Empty("autoencoder"));
        }
        for (want, got) in [
            (dim * hidden, weights.len()),
            (hidden, bias.len()),
            (dim * hidden, decode_weights.len()),
            (dim, decode_bias.len()),
        ] {
            if want != got {
                return Err(LsedError::dims(want, got));
            }
        }
        let m = AutoencoderModel {
            dim,
            hidden,
            weights,
            bias,
            decode_weights,
            decode_bias,
        };
        if m.params_iter().any(|v| !v.is_finite()) {
            return Err(LsedError::Numerical("non-finite autoencoder parameter".into()));
        }
        Ok(m)
    }

    /// Uniform initialisation in `+-sqrt(6 / (d + N + 1))`, zero biases.
    pub fn random(dim: usize, hidden: usize, seed: u64) -> Result<Self> {
        let mut rng = crate::seeded_rng(seed);
        let r = (6.0 / (dim + hidden + 1) as f64).sqrt();
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-r..r)).collect() };
        let weights = draw(dim * hidden);
        let decode_weights = draw(dim * hidden);
        Self::new(dim, hidden, weights, vec![0.0; hidden], decode_weights, vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hidden_units(&self) -> usize {
        self.hidden
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight_row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.dim..(i + 1) * self.dim]
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn decode_weights(&self) -> &[f64] {
        &self.decode_weights
    }

    pub fn decode_bias(&self) -> &[f64] {
        &self.decode_bias
    }

    fn params_iter(&self) -> impl Iterator<Item = &f64> {
        self.weights
            .iter()
            .chain(&self.bias)
            .chain(&self.decode_weights)
            .chain(&self.decode_bias)
    }

    /// All parameters flattened as `W, b, W_dec, c`.
    pub fn params(&self) -> Vec<f64> {
        self.params_iter().copied().collect()
    }

    pub fn num_params(&self) -> usize {
        2 * self.dim * self.hidden + self.hidden + self.dim
    }

    /// Rebuilds a model of the same shape from a flattened parameter vector.
    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        if params.len() != self.num_params() {
            return Err(LsedError::dims(self.num_params(), params.len()));
        }
        let dn = self.dim * self.hidden;
        let (w, rest) = params.split_at(dn);
        let (b, rest) = rest.split_at(self.hidden);
        let (v, c) = rest.split_at(dn);
        Self::new(self.dim, self.hidden, w.to_vec(), b.to_vec(), v.to_vec(), c.to_vec())
    }

    /// Hidden activations `sig(W x + b)`.
    pub fn hidden_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let w = self.weight_row(i);
            let mut z = self.bias[i];
            for j in 0..self.dim {
                z += w[j] * x[j];
            }
            *o = sigmoid(z);
        }
    }

    fn decode_into(&self, h: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.decode_bias);
        for (i, &hi) in h.iter().enumerate() {
            let v = &self.decode_weights[i * self.dim..(i + 1) * self.dim];
            for j in 0..self.dim {
                out[j] += hi * v[j];
            }
        }
    }

    pub fn reconstruct(&self, x: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; self.hidden];
        self.hidden_into(x, &mut h);
        let mut out = vec![0.0; self.dim];
        self.decode_into(&h, &mut out);
        out
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn kl(rho: f64, rho_hat: f64) -> f64 {
    rho * (rho / rho_hat).ln() + (1.0 - rho) * ((1.0 - rho) / (1.0 - rho_hat)).ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SannConfig {
    pub hidden_units: usize,
    pub sparsity_target: f64,
    pub sparsity_weight: f64,
    pub weight_decay: f64,
    pub learning_rate: f64,
    /// Training stops once the step has been halved below this.
    pub min_learning_rate: f64,
    pub max_epochs: usize,
    /// Relative loss decrease below which training stops.
    pub tol: f64,
    pub seed: u64,
}

impl Default for SannConfig {
    fn default() -> Self {
        SannConfig {
            hidden_units: 512,
            sparsity_target: 0.1,
            sparsity_weight: 3.0,
            weight_decay: 0.01,
            learning_rate: 1.0,
            min_learning_rate: 1e-8,
            max_epochs: 200,
            tol: 1e-7,
            seed: 0,
        }
    }
}

impl SannConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sparsity_target > 0.0 && self.sparsity_target < 1.0) {
            return Err(LsedError::config("sparsity target must lie in (0, 1)"));
        }
        if !(self.sparsity_weight >= 0.0 && self.weight_decay >= 0.0) {
            return Err(LsedError::config("sparsity weight and weight decay must be >= 0"));
        }
        if self.hidden_units == 0 {
            return Err(LsedError::config("hidden_units must be >= 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(LsedError::config("learning_rate must be positive"));
        }
        Ok(())
    }
}

/// The three cost terms; `total = error + weight + beta * sparsity`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SannCost {
    pub error: f64,
    pub weight: f64,
    pub sparsity: f64,
    pub total: f64,
}

fn mean_activations(model: &AutoencoderModel, samples: &[Vec<f64>]) -> Vec<f64> {
    let n = model.hidden;
    let chunks = samples.len().div_ceil(CHUNK);
    let parts = par::map_range(chunks, |c| {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(samples.len());
        let mut acc = vec![0.0; n];
        let mut h = vec![0.0; n];
        for x in &samples[lo..hi] {
            model.hidden_into(x, &mut h);
            for (a, v) in acc.iter_mut().zip(&h) {
                *a += v;
            }
        }
        acc
    });
    let mut total = vec![0.0; n];
    for p in parts {
        for (t, v) in total.iter_mut().zip(&p) {
            *t += v;
        }
    }
    let m = samples.len() as f64;
    total.iter_mut().for_each(|t| *t /= m);
    total
}

fn clamp_rho(r: f64) -> f64 {
    r.clamp(RHO_CLAMP, 1.0 - RHO_CLAMP)
}

fn regulariser(model: &AutoencoderModel, cfg: &SannConfig) -> f64 {
    let sq: f64 = model.weights.iter().chain(&model.decode_weights).map(|w| w * w).sum();
    0.5 * cfg.weight_decay * sq
}

fn sparsity_term(rho_hat: &[f64], cfg: &SannConfig) -> f64 {
    rho_hat
        .iter()
        .map(|&r| kl(cfg.sparsity_target, clamp_rho(r)))
        .sum()
}

/// Evaluates the autoencoder cost on a batch.
pub fn sann_cost(model: &AutoencoderModel, samples: &[Vec<f64>], cfg: &SannConfig) -> Result<SannCost> {
    let d = sample_dim(samples)?;
    if d != model.dim {
        return Err(LsedError::dims(model.dim, d));
    }
    let rho_hat = mean_activations(model, samples);
    let chunks = samples.len().div_ceil(CHUNK);
    let parts = par::map_range(chunks, |c| {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(samples.len());
        let mut h = vec![0.0; model.hidden];
        let mut xr = vec![0.0; d];
        let mut acc = 0.0;
        for x in &samples[lo..hi] {
            model.hidden_into(x, &mut h);
            model.decode_into(&h, &mut xr);
            acc += xr.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        acc
    });
    let error = 0.5 * parts.iter().sum::<f64>() / samples.len() as f64;
    Ok(finish_cost(error, model, &rho_hat, cfg))
}

fn finish_cost(error: f64, model: &AutoencoderModel, rho_hat: &[f64], cfg: &SannConfig) -> SannCost {
    let weight = regulariser(model, cfg);
    let sparsity = sparsity_term(rho_hat, cfg);
    SannCost {
        error,
        weight,
        sparsity,
        total: error + weight + cfg.sparsity_weight * sparsity,
    }
}

/// Cost and its gradient with respect to [`AutoencoderModel::params`].
pub fn sann_gradient(
    model: &AutoencoderModel,
    samples: &[Vec<f64>],
    cfg: &SannConfig,
) -> Result<(SannCost, Vec<f64>)> {
    let d = sample_dim(samples)?;
    if d != model.dim {
        return Err(LsedError::dims(model.dim, d));
    }
    let n = model.hidden;
    let m = samples.len() as f64;
    let rho_hat = mean_activations(model, samples);
    let rho = cfg.sparsity_target;
    // d(beta * KL)/d(rho_hat_i); zero where the clamp is active
    let kl_grad: Vec<f64> = rho_hat
        .iter()
        .map(|&r| {
            if r <= RHO_CLAMP || r >= 1.0 - RHO_CLAMP {
                0.0
            } else {
                cfg.sparsity_weight * (-rho / r + (1.0 - rho) / (1.0 - r))
            }
        })
        .collect();

    let dn = d * n;
    let len = model.num_params();
    let chunks = samples.len().div_ceil(CHUNK);
    let parts = par::map_range(chunks, |c| {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(samples.len());
        let mut g = vec![0.0; len + 1];
        let mut h = vec![0.0; n];
        let mut xr = vec![0.0; d];
        let mut e = vec![0.0; d];
        for x in &samples[lo..hi] {
            model.hidden_into(x, &mut h);
            model.decode_into(&h, &mut xr);
            let mut err = 0.0;
            for j in 0..d {
                e[j] = xr[j] - x[j];
                err += e[j] * e[j];
            }
            g[len] += err;
            let (gw, rest) = g.split_at_mut(dn);
            let (gb, rest) = rest.split_at_mut(n);
            let (gv, rest) = rest.split_at_mut(dn);
            let gc = &mut rest[..d];
            for j in 0..d {
                gc[j] += e[j];
            }
            for i in 0..n {
                let v = &model.decode_weights[i * d..(i + 1) * d];
                let gvi = &mut gv[i * d..(i + 1) * d];
                let mut back = 0.0;
                for j in 0..d {
                    gvi[j] += h[i] * e[j];
                    back += v[j] * e[j];
                }
                let dz = (back + kl_grad[i]) * h[i] * (1.0 - h[i]);
                gb[i] += dz;
                let gwi = &mut gw[i * d..(i + 1) * d];
                for j in 0..d {
                    gwi[j] += dz * x[j];
                }
            }
        }
        g
    });
    let mut grad = vec![0.0; len + 1];
    for p in parts {
        for (t, v) in grad.iter_mut().zip(&p) {
            *t += v;
        }
    }
    let sq_err = grad.pop().unwrap_or(0.0);
    grad.iter_mut().for_each(|g| *g /= m);
    let lambda = cfg.weight_decay;
    for k in 0..dn {
        grad[k] += lambda * model.weights[k];
        grad[dn + n + k] += lambda * model.decode_weights[k];
    }
    let cost = finish_cost(0.5 * sq_err / m, model, &rho_hat, cfg);
    Ok((cost, grad))
}

#[derive(Debug, Clone)]
pub struct SannOutcome {
    pub model: AutoencoderModel,
    /// Total cost after every accepted epoch, starting with the initial model.
    pub loss_trace: Vec<f64>,
    pub final_cost: SannCost,
}

pub fn sann_train(samples: &[Vec<f64>], cfg: &SannConfig) -> Result<AutoencoderModel> {
    Ok(sann_train_detailed(samples, cfg)?.model)
}

/// Full-batch gradient descent; a step that raises the cost is retried at
/// half the rate, so the loss trace never increases.
pub fn sann_train_detailed(samples: &[Vec<f64>], cfg: &SannConfig) -> Result<SannOutcome> {
    cfg.validate()?;
    let d = sample_dim(samples)?;
    let model = AutoencoderModel::random(d, cfg.hidden_units, cfg.seed)?;
    sann_train_from(model, samples, cfg)
}

/// Continues training from an existing model.
pub fn sann_train_from(
    mut model: AutoencoderModel,
    samples: &[Vec<f64>],
    cfg: &SannConfig,
) -> Result<SannOutcome> {
    cfg.validate()?;
    let (mut cost, mut grad) = sann_gradient(&model, samples, cfg)?;
    check_finite(cost.total, 0)?;
    let mut trace = vec![cost.total];
    let mut lr = cfg.learning_rate;
    let mut params = model.params();

    'epochs: for epoch in 1..=cfg.max_epochs {
        loop {
            let trial: Vec<f64> = params.iter().zip(&grad).map(|(p, g)| p - lr * g).collect();
            let candidate = match model.with_params(&trial) {
                Ok(c) => c,
                Err(_) => {
                    lr *= 0.5;
                    if lr < cfg.min_learning_rate {
                        break 'epochs;
                    }
                    continue;
                }
            };
            let (c_cost, c_grad) = sann_gradient(&candidate, samples, cfg)?;
            if c_cost.total.is_finite() && c_cost.total <= cost.total {
                let rel = (cost.total - c_cost.total) / cost.total.abs().max(1e-300);
                model = candidate;
                params = trial;
                cost = c_cost;
                grad = c_grad;
                trace.push(cost.total);
                log::trace!("sann epoch {epoch}: J = {:.6e} (lr {lr:.3e})", cost.total);
                if rel < cfg.tol {
                    break 'epochs;
                }
                break;
            }
            lr *= 0.5;
            if lr < cfg.min_learning_rate {
                break 'epochs;
            }
        }
    }
    check_finite(cost.total, trace.len())?;
    Ok(SannOutcome {
        model,
        loss_trace: trace,
        final_cost: cost,
    })
}

fn check_finite(loss: f64, epoch: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(LsedError::Numerical(format!(
            "autoencoder loss became {loss} at epoch {epoch}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_samples(m: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = crate::seeded_rng(seed);
        (0..m)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn gradient_matches_central_differences() {
        let samples = toy_samples(8, 4, 1);
        let cfg = SannConfig {
            hidden_units: 3,
            ..Default::default()
        };
        let mut model = AutoencoderModel::random(4, 3, 9).unwrap();
        let mut p = model.params();
        // non-zero biases so every gradient block is exercised
        for (k, v) in p.iter_mut().enumerate() {
            *v += 0.05 * ((k as f64) * 0.7).sin();
        }
        model = model.with_params(&p).unwrap();
        let (_, grad) = sann_gradient(&model, &samples, &cfg).unwrap();
        let h = 1e-5;
        for k in 0..p.len() {
            let mut plus = p.clone();
            plus[k] += h;
            let mut minus = p.clone();
            minus[k] -= h;
            let jp = sann_cost(&model.with_params(&plus).unwrap(), &samples, &cfg).unwrap().total;
            let jm = sann_cost(&model.with_params(&minus).unwrap(), &samples, &cfg).unwrap().total;
            let fd = (jp - jm) / (2.0 * h);
            let rel = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-8);
            assert!(rel <= 1e-5, "param {k}: analytic {} fd {fd}", grad[k]);
        }
    }

    #[test]
    fn loss_trace_is_non_increasing() {
        let samples = toy_samples(64, 5, 2);
        let cfg = SannConfig {
            hidden_units: 8,
            max_epochs: 80,
            learning_rate: 4.0,
            ..Default::default()
        };
        let out = sann_train_detailed(&samples, &cfg).unwrap();
        for w in out.loss_trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(out.loss_trace.last() < out.loss_trace.first());
    }

    #[test]
    fn unregularised_training_reduces_error() {
        let samples: Vec<Vec<f64>> = toy_samples(200, 3, 3)
            .into_iter()
            .filter(|x| x.iter().map(|v| v * v).sum::<f64>() <= 1.0)
            .collect();
        let cfg = SannConfig {
            hidden_units: 3,
            sparsity_weight: 0.0,
            weight_decay: 0.0,
            max_epochs: 100,
            ..Default::default()
        };
        let init = AutoencoderModel::random(3, 3, cfg.seed).unwrap();
        let before = sann_cost(&init, &samples, &cfg).unwrap().error;
        let out = sann_train_detailed(&samples, &cfg).unwrap();
        assert!(out.final_cost.error < before);
    }

    #[test]
    fn kl_vanishes_at_target() {
        let cfg = SannConfig::default();
        assert_eq!(sparsity_term(&[0.1, 0.1, 0.1], &cfg), 0.0);
        assert!(sparsity_term(&[0.0, 1.0], &cfg).is_finite());
        assert!(sparsity_term(&[0.3, 0.01], &cfg) > 0.0);
    }

    #[test]
    fn training_is_deterministic() {
        let samples = toy_samples(40, 4, 4);
        let cfg = SannConfig {
            hidden_units: 6,
            max_epochs: 10,
            ..Default::default()
        };
        let a = sann_train(&samples, &cfg).unwrap();
        let b = sann_train(&samples, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sigmoid_saturates_without_nan() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!(sigmoid(20.0) >= 1.0 - 1e-8);
    }
}
