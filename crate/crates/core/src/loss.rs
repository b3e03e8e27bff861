//! EDM preconditioning, calibrated per-feature losses and the learned
//! time normalization of the joint loss.

use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::math::log_sum_exp;

/// Smallest `t` fed to the time normalizer (`ln t` is undefined at 0).
pub const NORMALIZER_T_MIN: f64 = 1e-5;

/// EDM coefficients for unit data variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdmCoefficients {
    pub c_skip: f64,
    pub c_out: f64,
    /// Input scaling `1 / sqrt(σ² + 1)` applied before the network.
    pub c_in: f64,
    pub lambda: f64,
}

impl EdmCoefficients {
    pub fn new(sigma: f64) -> Self {
        let s2 = sigma * sigma;
        let c_skip = 1.0 / (s2 + 1.0);
        let c_out = sigma / libm::sqrt(s2 + 1.0);
        let c_in = 1.0 / libm::sqrt(s2 + 1.0);
        let lambda = (s2 + 1.0) / s2;
        Self { c_skip, c_out, c_in, lambda }
    }

    /// Denoised estimate `c_skip·x_t + c_out·F`.
    #[inline]
    pub fn denoise(&self, x_t: f64, f: f64) -> f64 {
        self.c_skip * x_t + self.c_out * f
    }
}

/// Calibrated MSE for one continuous value and its derivative w.r.t. `F`.
///
/// With unit-variance data no further scaling is needed.
#[inline]
pub fn mse_loss_cont(x0: f64, x_t: f64, f: f64, sigma: f64) -> (f64, f64) {
    let c = EdmCoefficients::new(sigma);
    let err = c.denoise(x_t, f) - x0;
    (c.lambda * err * err, 2.0 * c.lambda * c.c_out * err)
}

/// Cross entropy of `softmax(logits)` against `code`, divided by the
/// feature entropy `z`. Writes `∂loss/∂logits` into `grad`.
pub fn ce_loss_cat(code: usize, logits: &[f64], z: f64, grad: &mut [f64]) -> Result<f64> {
    if !(z > 0.0) {
        return Err(Error::Domain { what: "categorical entropy", value: z });
    }
    if code >= logits.len() {
        return Err(Error::Shape(alloc::format!("code {code} out of range for {} classes", logits.len())));
    }
    let lse = log_sum_exp(logits);
    for (g, &l) in grad.iter_mut().zip(logits) {
        *g = libm::exp(l - lse) / z;
    }
    grad[code] -= 1.0 / z;
    Ok((lse - logits[code]) / z)
}

/// Mean of the calibrated per-feature losses.
pub fn joint_loss(losses: &[f64]) -> f64 {
    losses.iter().sum::<f64>() / losses.len() as f64
}

/// Stratified uniform timesteps `frac(u + i/B)` sharing one draw `u`.
pub fn antithetic_from(u: f64, batch: usize) -> Vec<f64> {
    (0..batch)
        .map(|i| {
            let t = u + i as f64 / batch as f64;
            if t >= 1.0 {
                t - 1.0
            } else {
                t
            }
        })
        .collect()
}

pub fn antithetic_timesteps<R: Rng + ?Sized>(batch: usize, rng: &mut R) -> Vec<f64> {
    let u: f64 = rng.random();
    antithetic_from(u, batch)
}

/// Number of random Fourier frequencies (features are sin/cos pairs).
pub const NORMALIZER_FREQS: usize = 512;
/// Std of the angular frequencies applied to `ln(t) / 4`.
const NORMALIZER_FREQ_STD: f64 = 16.0;

/// Predicts the average joint loss `L(t)` so that `L(t) / Z(t) ≈ 1`.
///
/// Random Fourier features of `ln(t) / 4`, one linear layer, exponential
/// output. Zero-initialized, so the first prediction is exactly 1.
#[derive(Debug, Clone, PartialEq)]
pub struct LossNormalizer {
    pub freqs: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: f64,
    adam_m: Vec<f64>,
    adam_v: Vec<f64>,
    adam_t: u64,
}

impl LossNormalizer {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let freqs: Vec<f64> = (0..NORMALIZER_FREQS)
            .map(|_| NORMALIZER_FREQ_STD * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();
        Self::from_parts(freqs, alloc::vec![0.0; 2 * NORMALIZER_FREQS], 0.0)
    }

    pub fn from_parts(freqs: Vec<f64>, weights: Vec<f64>, bias: f64) -> Self {
        let n = weights.len() + 1;
        Self { freqs, weights, bias, adam_m: alloc::vec![0.0; n], adam_v: alloc::vec![0.0; n], adam_t: 0 }
    }

    fn features(&self, t: f64, out: &mut [f64]) {
        let c = libm::log(t.max(NORMALIZER_T_MIN)) / 4.0;
        let n = self.freqs.len();
        for (k, &f) in self.freqs.iter().enumerate() {
            let a = f * c;
            out[k] = libm::cos(a);
            out[n + k] = libm::sin(a);
        }
    }

    pub fn predict(&self, t: f64) -> f64 {
        let mut phi = alloc::vec![0.0; self.weights.len()];
        self.features(t, &mut phi);
        let s: f64 = phi.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>() + self.bias;
        libm::exp(s)
    }

    /// `loss / Z(t)`; the normalizer is a constant from the caller's side.
    pub fn normalize(&self, loss: f64, t: f64) -> f64 {
        loss / self.predict(t)
    }

    /// One Adam step on the mean squared error between `Z(t)` and the
    /// observed joint losses.
    pub fn fit_step(&mut self, batch: &[(f64, f64)], lr: f64) {
        if batch.is_empty() {
            return;
        }
        let n = self.weights.len();
        let mut grad = alloc::vec![0.0; n + 1];
        let mut phi = alloc::vec![0.0; n];
        let scale = 1.0 / batch.len() as f64;
        for &(t, loss) in batch {
            self.features(t, &mut phi);
            let s: f64 = phi.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>() + self.bias;
            let pred = libm::exp(s);
            let g = 2.0 * (pred - loss) * pred * scale;
            for (gk, &p) in grad.iter_mut().zip(&phi) {
                *gk += g * p;
            }
            grad[n] += g;
        }
        self.adam_t += 1;
        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        let bc1 = 1.0 - libm::pow(b1, self.adam_t as f64);
        let bc2 = 1.0 - libm::pow(b2, self.adam_t as f64);
        for (k, &g) in grad.iter().enumerate() {
            self.adam_m[k] = b1 * self.adam_m[k] + (1.0 - b1) * g;
            self.adam_v[k] = b2 * self.adam_v[k] + (1.0 - b2) * g * g;
            let step = lr * (self.adam_m[k] / bc1) / (libm::sqrt(self.adam_v[k] / bc2) + eps);
            if k < n {
                self.weights[k] -= step;
            } else {
                self.bias -= step;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edm_examples() {
        let c = EdmCoefficients::new(1.0);
        assert!((c.c_skip - 0.5).abs() < 1e-15);
        assert!((c.c_out - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((c.lambda - 2.0).abs() < 1e-15);
        let small = EdmCoefficients::new(1e-8);
        assert!((small.c_skip - 1.0).abs() < 1e-12 && small.c_out < 1e-7);
        let big = EdmCoefficients::new(80.0);
        assert!((big.c_skip - 1.0 / 6401.0).abs() < 1e-15);
        assert!((big.c_out - 0.99992).abs() < 1e-5);
        for s in [1e-4, 0.3, 1.0, 7.0, 100.0] {
            let c = EdmCoefficients::new(s);
            assert!((c.lambda * c.c_out * c.c_out - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mse_examples() {
        let (l, _) = mse_loss_cont(0.5, 0.7, 0.0, 1.0);
        assert!((l - 0.045).abs() < 1e-12);
        let c = EdmCoefficients::new(3.0);
        let (x0, xt) = (0.2, 1.9);
        let perfect = (x0 - c.c_skip * xt) / c.c_out;
        assert!(mse_loss_cont(x0, xt, perfect, 3.0).0 < 1e-24);
    }

    #[test]
    fn ce_examples() {
        let mut g = [0.0; 2];
        let l = ce_loss_cat(1, &[0.0, 0.0], core::f64::consts::LN_2, &mut g).unwrap();
        assert!((l - 1.0).abs() < 1e-15);
        let l = ce_loss_cat(0, &[60.0, -60.0], 0.5, &mut g).unwrap();
        assert!(l < 1e-40);
        assert!(ce_loss_cat(0, &[0.0, 0.0], 0.0, &mut g).is_err());
        // expected loss at the proportion-matching logits equals 1
        let p = [0.7, 0.2, 0.1];
        let z = crate::math::entropy(&p);
        let logits: Vec<f64> = p.iter().map(|x| libm::log(*x)).collect();
        let mut g3 = [0.0; 3];
        let e: f64 = (0..3).map(|c| p[c] * ce_loss_cat(c, &logits, z, &mut g3).unwrap()).sum();
        assert!((e - 1.0).abs() < 1e-12);
    }

    #[test]
    fn joint_examples() {
        assert_eq!(joint_loss(&[1.0, 1.0, 1.0]), 1.0);
        assert_eq!(joint_loss(&[0.5, 1.5]), 1.0);
        assert!((joint_loss(&[0.2, 0.2, 1.1]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn antithetic_examples() {
        let t = antithetic_from(0.1, 4);
        let want = [0.1, 0.35, 0.6, 0.85];
        for (a, b) in t.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        let t = antithetic_from(0.97, 7);
        let mut hits = [0usize; 7];
        for x in t {
            hits[(x * 7.0) as usize] += 1;
        }
        assert!(hits.iter().all(|&h| h == 1));
    }

    #[test]
    fn antithetic_deciles_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut bins = [0usize; 10];
        let mut total = 0;
        while total < 100_000 {
            for t in antithetic_timesteps(3, &mut rng) {
                bins[((t * 10.0) as usize).min(9)] += 1;
                total += 1;
            }
        }
        for b in bins {
            assert!((b as f64 / total as f64 - 0.1).abs() <= 0.01);
        }
    }

    #[test]
    fn normalizer_starts_at_one_and_tracks_constant() {
        let mut n = LossNormalizer::new(1);
        assert_eq!(n.predict(0.3), 1.0);
        assert_eq!(n.normalize(0.7, 0.0), 0.7);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..3000 {
            let batch: Vec<(f64, f64)> = antithetic_timesteps(64, &mut rng).into_iter().map(|t| (t, 0.4)).collect();
            n.fit_step(&batch, 1e-3);
        }
        for t in [0.01, 0.2, 0.5, 0.9] {
            assert!((n.predict(t) - 0.4).abs() < 0.02, "t={t} pred={}", n.predict(t));
            assert!((n.normalize(0.4, t) - 1.0).abs() < 0.05);
        }
    }
}
