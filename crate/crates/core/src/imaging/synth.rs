//! Synthetic identity images: a stand-in corpus with controllable
//! within-identity variation.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{LsedError, Result};
use crate::imaging::Image;
use crate::util::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub size: usize,
    /// Textured blobs per identity.
    pub blobs: usize,
    /// Per-pixel Gaussian noise standard deviation.
    pub noise_std: f64,
    /// Maximum absolute sub-pixel translation per variation, in pixels.
    pub max_shift: f64,
    /// Contrast multiplier is drawn from `1 ± contrast_jitter`.
    pub contrast_jitter: f64,
    /// Additive brightness offset drawn from `± brightness_jitter`.
    pub brightness_jitter: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            size: 64,
            blobs: 7,
            noise_std: 0.02,
            max_shift: 1.0,
            contrast_jitter: 0.15,
            brightness_jitter: 0.05,
        }
    }
}

impl SynthParams {
    /// Parameters with every per-variation jitter switched off.
    pub fn without_variation(self) -> Self {
        SynthParams {
            noise_std: 0.0,
            max_shift: 0.0,
            contrast_jitter: 0.0,
            brightness_jitter: 0.0,
            ..self
        }
    }
}

#[derive(Debug, Clone)]
struct Blob {
    cx: f64,
    cy: f64,
    sigma: f64,
    freq: f64,
    cos_t: f64,
    sin_t: f64,
    phase: f64,
    amplitude: f64,
}

#[derive(Debug, Clone)]
struct Identity {
    grad_x: f64,
    grad_y: f64,
    blobs: Vec<Blob>,
}

impl Identity {
    fn draw(seed: u64, params: &SynthParams) -> Self {
        let mut rng = crate::seeded_rng(derive_seed(seed, 0x1D));
        let size = params.size as f64;
        let blobs = (0..params.blobs)
            .map(|_| {
                let theta: f64 = rng.random_range(0.0..PI);
                let period: f64 = rng.random_range(4.0..10.0);
                Blob {
                    cx: rng.random_range(0.1 * size..0.9 * size),
                    cy: rng.random_range(0.1 * size..0.9 * size),
                    sigma: rng.random_range(0.1 * size..0.22 * size),
                    freq: 2.0 * PI / period,
                    cos_t: theta.cos(),
                    sin_t: theta.sin(),
                    phase: rng.random_range(0.0..2.0 * PI),
                    amplitude: rng.random_range(0.15..0.35),
                }
            })
            .collect();
        Identity {
            grad_x: rng.random_range(-0.2..0.2) / size,
            grad_y: rng.random_range(-0.2..0.2) / size,
            blobs,
        }
    }

    fn eval(&self, x: f64, y: f64, centre: f64) -> f64 {
        let mut v = 0.5 + self.grad_x * (x - centre) + self.grad_y * (y - centre);
        for b in &self.blobs {
            let dx = x - b.cx;
            let dy = y - b.cy;
            let envelope = (-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma)).exp();
            let carrier = (b.freq * (dx * b.cos_t + dy * b.sin_t) + b.phase).cos();
            v += b.amplitude * envelope * carrier;
        }
        v
    }
}

/// Renders variation `variation_seed` of identity `identity_seed`.
///
/// The identity fixes a smooth intensity gradient and a set of Gaussian-windowed
/// gratings; each variation adds a sub-pixel translation, contrast and
/// brightness jitter and pixel noise. Output is clamped to `[0, 1]` and is a
/// pure function of the two seeds and `params`.
pub fn synth_identity_image(identity_seed: u64, variation_seed: u64, params: &SynthParams) -> Result<Image> {
    if params.size < 2 {
        return Err(LsedError::config("synthetic image size must be at least 2"));
    }
    if params.noise_std < 0.0 || params.max_shift < 0.0 || params.contrast_jitter < 0.0 {
        return Err(LsedError::config("synthetic jitter parameters must be non-negative"));
    }
    let identity = Identity::draw(identity_seed, params);
    let mut rng = crate::seeded_rng(derive_seed(derive_seed(identity_seed, 0x7A), variation_seed));
    let jitter = |rng: &mut crate::SeededRng, half: f64| {
        if half > 0.0 {
            rng.random_range(-half..=half)
        } else {
            0.0
        }
    };
    let shift_x = jitter(&mut rng, params.max_shift);
    let shift_y = jitter(&mut rng, params.max_shift);
    let contrast = 1.0 + jitter(&mut rng, params.contrast_jitter);
    let brightness = jitter(&mut rng, params.brightness_jitter);
    let noise = Normal::new(0.0, params.noise_std.max(f64::MIN_POSITIVE))
        .map_err(|e| LsedError::config(e.to_string()))?;
    let centre = (params.size as f64 - 1.0) / 2.0;
    let n = params.size;
    let mut pixels = Vec::with_capacity(n * n);
    for y in 0..n {
        for x in 0..n {
            let base = identity.eval(x as f64 - shift_x, y as f64 - shift_y, centre);
            let mut v = 0.5 + contrast * (base - 0.5) + brightness;
            if params.noise_std > 0.0 {
                v += noise.sample(&mut rng);
            }
            pixels.push(v.clamp(0.0, 1.0));
        }
    }
    Image::new(n, n, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_in_both_seeds() {
        let p = SynthParams::default();
        let a = synth_identity_image(11, 3, &p).unwrap();
        let b = synth_identity_image(11, 3, &p).unwrap();
        assert_eq!(a.pixels(), b.pixels());
        assert_ne!(a, synth_identity_image(11, 4, &p).unwrap());
    }

    #[test]
    fn zero_variation_collapses_variations() {
        let p = SynthParams::default().without_variation();
        let a = synth_identity_image(5, 1, &p).unwrap();
        for v in 2..6 {
            assert_eq!(a, synth_identity_image(5, v, &p).unwrap());
        }
    }

    #[test]
    fn same_identity_is_closer_on_average() {
        let p = SynthParams::default();
        let (mut same, mut diff) = (0.0, 0.0);
        for k in 0..100u64 {
            let a = synth_identity_image(2 * k, 0, &p).unwrap();
            let a2 = synth_identity_image(2 * k, 1, &p).unwrap();
            let b = synth_identity_image(2 * k + 1, 0, &p).unwrap();
            same += a.l2_distance_sq(&a2).unwrap().sqrt();
            diff += a.l2_distance_sq(&b).unwrap().sqrt();
        }
        assert!(same < diff, "same {same} vs different {diff}");
    }

    #[test]
    fn intensities_stay_in_unit_range() {
        let img = synth_identity_image(99, 7, &SynthParams::default()).unwrap();
        assert!(img.pixels().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
