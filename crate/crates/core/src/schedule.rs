//! Adaptive noise schedules.
//!
//! A schedule maps the global time `t ∈ [0, 1]` to a noise level through the
//! quantile function of a logistic distribution whose support is pulled
//! back to `(0, 1)` by a logit. The same family, scaled by `γ`, is fitted
//! online to the observed diffusion loss as a function of the normalized
//! noise level, so the schedule concentrates timesteps where the loss
//! changes fastest.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{inv_softplus, logit, sigmoid, softplus};

/// Clamp applied to `t` before evaluating the quantile function.
pub const T_EPS: f64 = 1e-5;
/// Floor on the density before it is inverted into an importance weight.
pub const PDF_FLOOR: f64 = 1e-3;
/// Default learning rate for schedule fitting.
pub const FIT_LR: f64 = 0.01;

pub const CONT_SIGMA_MAX: f64 = 80.0;
pub const CAT_SIGMA_MAX: f64 = 100.0;

fn check_unit(what: &'static str, x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain { what, value: x })
    }
}

#[inline]
fn odds_ratio_pow(sigma: f64, mu: f64, nu: f64) -> f64 {
    libm::pow((sigma * (1.0 - mu)) / ((1.0 - sigma) * mu), -nu)
}

/// Cdf of the domain-adapted logistic distribution on `(0, 1)`.
pub fn cdf_dalog(sigma: f64, mu: f64, nu: f64) -> Result<f64> {
    check_unit("cdf_dalog", sigma)?;
    Ok(1.0 / (1.0 + odds_ratio_pow(sigma, mu, nu)))
}

/// Density of the domain-adapted logistic distribution.
pub fn pdf_dalog(sigma: f64, mu: f64, nu: f64) -> Result<f64> {
    check_unit("pdf_dalog", sigma)?;
    let z = odds_ratio_pow(sigma, mu, nu);
    // z / (1 + z)^2 written so neither z -> 0 nor z -> inf produces NaN
    let f = 1.0 / (1.0 + z);
    let g = 1.0 / (1.0 + 1.0 / z);
    Ok(nu / (sigma * (1.0 - sigma)) * f * g)
}

/// Quantile function: `sigmoid(logit(μ) + logit(t) / ν)`.
pub fn quantile_dalog(t: f64, mu: f64, nu: f64) -> Result<f64> {
    check_unit("quantile_dalog", t)?;
    Ok(sigmoid(logit(mu) + logit(t) / nu))
}

/// Shape and bounds of one schedule entity.
///
/// The shape parameters are stored unconstrained: `μ = sigmoid(mu_logit)`,
/// `ν = 1 + softplus(nu_raw)`, `γ = exp(gamma_log)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub mu_logit: f64,
    pub nu_raw: f64,
    pub gamma_log: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Adam moments for (mu_logit, nu_raw, gamma_log) and the step count.
    pub adam_m: [f64; 3],
    pub adam_v: [f64; 3],
    pub adam_t: u64,
}

impl ScheduleParams {
    pub fn new(mu: f64, nu: f64, gamma: f64, sigma_min: f64, sigma_max: f64) -> Result<Self> {
        check_unit("mu", mu)?;
        if !(nu > 1.0) {
            return Err(Error::Domain { what: "nu (must exceed 1)", value: nu });
        }
        if !(gamma > 0.0) {
            return Err(Error::Domain { what: "gamma", value: gamma });
        }
        if !(sigma_min >= 0.0 && sigma_max > sigma_min) {
            return Err(Error::Config("need 0 <= sigma_min < sigma_max".into()));
        }
        Ok(Self {
            mu_logit: logit(mu),
            nu_raw: inv_softplus(nu - 1.0),
            gamma_log: libm::log(gamma),
            sigma_min,
            sigma_max,
            adam_m: [0.0; 3],
            adam_v: [0.0; 3],
            adam_t: 0,
        })
    }

    /// Initial schedule: inflection at 1/4, near-uniform steepness, unit scale.
    pub fn initial(sigma_min: f64, sigma_max: f64) -> Result<Self> {
        Self::new(0.25, 1.0 + 1e-2, 1.0, sigma_min, sigma_max)
    }

    pub fn mu(&self) -> f64 {
        sigmoid(self.mu_logit)
    }

    pub fn nu(&self) -> f64 {
        1.0 + softplus(self.nu_raw)
    }

    pub fn gamma(&self) -> f64 {
        libm::exp(self.gamma_log)
    }

    /// Normalized noise level for time `t` (clamped to `[T_EPS, 1 - T_EPS]`).
    pub fn normalized_sigma(&self, t: f64) -> f64 {
        let t = t.clamp(T_EPS, 1.0 - T_EPS);
        sigmoid(self.mu_logit + logit(t) / self.nu())
    }

    pub fn sigma_of_t(&self, t: f64) -> f64 {
        self.sigma_min + (self.sigma_max - self.sigma_min) * self.normalized_sigma(t)
    }

    pub fn normalize(&self, sigma: f64) -> Result<f64> {
        if !(sigma >= self.sigma_min && sigma <= self.sigma_max) {
            return Err(Error::Domain { what: "sigma outside schedule bounds", value: sigma });
        }
        Ok(((sigma - self.sigma_min) / (self.sigma_max - self.sigma_min)).clamp(1e-12, 1.0 - 1e-12))
    }

    /// Predicted loss `γ · F(σ)` for a noise level in schedule units.
    pub fn predict_loss(&self, sigma: f64) -> Result<f64> {
        let s = self.normalize(sigma)?;
        Ok(self.gamma() * cdf_dalog(s, self.mu(), self.nu())?)
    }

    /// Importance-weighted squared error of the loss fit on normalized
    /// noise levels.
    pub fn fit_residual(&self, batch: &[(f64, f64)]) -> Result<f64> {
        let (mu, nu, gamma) = (self.mu(), self.nu(), self.gamma());
        let mut num = 0.0;
        let mut den = 0.0;
        for &(s, l) in batch {
            let w = 1.0 / pdf_dalog(s, mu, nu)?.max(PDF_FLOOR);
            let r = l - gamma * cdf_dalog(s, mu, nu)?;
            num += w * r * r;
            den += w;
        }
        Ok(num / den)
    }

    /// One Adam step on the importance-weighted loss fit, with the batch
    /// given as (normalized σ, observed loss) pairs.
    pub fn fit_step_normalized(&mut self, batch: &[(f64, f64)], lr: f64) -> Result<()> {
        if batch.is_empty() {
            return Ok(());
        }
        let (mu, nu, gamma) = (self.mu(), self.nu(), self.gamma());
        let dnu_draw = sigmoid(self.nu_raw);
        let mut grad = [0.0f64; 3];
        let mut wsum = 0.0;
        for &(s, l) in batch {
            check_unit("normalized sigma", s)?;
            if !l.is_finite() || l < 0.0 {
                return Err(Error::Domain { what: "observed loss", value: l });
            }
            let w = 1.0 / pdf_dalog(s, mu, nu)?.max(PDF_FLOOR);
            let y = logit(s) - self.mu_logit;
            let f = sigmoid(nu * y);
            let fg = f * (1.0 - f);
            let g = -2.0 * w * (l - gamma * f);
            grad[0] += g * gamma * (-nu * fg);
            grad[1] += g * gamma * y * fg * dnu_draw;
            grad[2] += g * gamma * f;
            wsum += w;
        }
        self.adam_t += 1;
        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        let bc1 = 1.0 - libm::pow(b1, self.adam_t as f64);
        let bc2 = 1.0 - libm::pow(b2, self.adam_t as f64);
        let mut step = [0.0; 3];
        for k in 0..3 {
            let gk = grad[k] / wsum;
            self.adam_m[k] = b1 * self.adam_m[k] + (1.0 - b1) * gk;
            self.adam_v[k] = b2 * self.adam_v[k] + (1.0 - b2) * gk * gk;
            step[k] = lr * (self.adam_m[k] / bc1) / (libm::sqrt(self.adam_v[k] / bc2) + eps);
        }
        self.mu_logit -= step[0];
        self.nu_raw -= step[1];
        self.gamma_log -= step[2];
        Ok(())
    }

    /// One fit step with noise levels in schedule units.
    pub fn fit_step(&mut self, batch: &[(f64, f64)], lr: f64) -> Result<()> {
        let norm: Vec<(f64, f64)> =
            batch.iter().map(|&(s, l)| Ok((self.normalize(s)?, l))).collect::<Result<_>>()?;
        self.fit_step_normalized(&norm, lr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    Single,
    PerType,
    PerFeature,
}

impl ScheduleMode {
    pub fn name(self) -> &'static str {
        match self {
            ScheduleMode::Single => "single",
            ScheduleMode::PerType => "per_type",
            ScheduleMode::PerFeature => "per_feature",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "single" => Some(ScheduleMode::Single),
            "per_type" => Some(ScheduleMode::PerType),
            "per_feature" => Some(ScheduleMode::PerFeature),
            _ => None,
        }
    }
}

/// Noise bounds per feature type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaBounds {
    pub cont: (f64, f64),
    pub cat: (f64, f64),
}

impl Default for SigmaBounds {
    fn default() -> Self {
        Self { cont: (0.0, CONT_SIGMA_MAX), cat: (0.0, CAT_SIGMA_MAX) }
    }
}

/// Schedules for every diffused feature.
///
/// Features are indexed in model order: continuous features first, then
/// categorical ones. Noise bounds always follow the feature's type, so in
/// `Single` mode both types share one normalized schedule but keep their own
/// `σ_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRegistry {
    pub mode: ScheduleMode,
    pub n_cont: usize,
    pub n_cat: usize,
    pub bounds: SigmaBounds,
    pub entries: Vec<ScheduleParams>,
}

impl ScheduleRegistry {
    pub fn new(mode: ScheduleMode, n_cont: usize, n_cat: usize, bounds: SigmaBounds) -> Result<Self> {
        if n_cont + n_cat == 0 {
            return Err(Error::Config("no features to schedule".into()));
        }
        let cont = ScheduleParams::initial(bounds.cont.0, bounds.cont.1)?;
        let cat = ScheduleParams::initial(bounds.cat.0, bounds.cat.1)?;
        let entries = match mode {
            ScheduleMode::Single => vec![if n_cont > 0 { cont } else { cat }],
            ScheduleMode::PerType => vec![cont, cat],
            ScheduleMode::PerFeature => {
                let mut e = vec![cont; n_cont];
                e.extend(core::iter::repeat(cat).take(n_cat));
                e
            }
        };
        Ok(Self { mode, n_cont, n_cat, bounds, entries })
    }

    pub fn n_features(&self) -> usize {
        self.n_cont + self.n_cat
    }

    /// Entity id used by feature `k` (model order).
    pub fn entity_of(&self, k: usize) -> usize {
        match self.mode {
            ScheduleMode::Single => 0,
            ScheduleMode::PerType => usize::from(k >= self.n_cont),
            ScheduleMode::PerFeature => k,
        }
    }

    /// Features fitted by entity `e`.
    pub fn features_of(&self, e: usize) -> Vec<usize> {
        (0..self.n_features()).filter(|&k| self.entity_of(k) == e).collect()
    }

    pub fn entry(&self, e: usize) -> Result<&ScheduleParams> {
        self.entries.get(e).ok_or(Error::UnknownEntity(e))
    }

    pub fn entry_mut(&mut self, e: usize) -> Result<&mut ScheduleParams> {
        self.entries.get_mut(e).ok_or(Error::UnknownEntity(e))
    }

    pub fn feature_bounds(&self, k: usize) -> (f64, f64) {
        if k < self.n_cont {
            self.bounds.cont
        } else {
            self.bounds.cat
        }
    }

    /// Noise level of entity `e` at time `t`, in that entity's own bounds.
    pub fn sigma_of_t(&self, t: f64, e: usize) -> Result<f64> {
        Ok(self.entry(e)?.sigma_of_t(t))
    }

    /// Noise level of feature `k` at time `t`.
    pub fn feature_sigma(&self, t: f64, k: usize) -> f64 {
        let (lo, hi) = self.feature_bounds(k);
        lo + (hi - lo) * self.entries[self.entity_of(k)].normalized_sigma(t)
    }

    /// Normalized noise level of feature `k` at time `t`.
    pub fn feature_normalized_sigma(&self, t: f64, k: usize) -> f64 {
        self.entries[self.entity_of(k)].normalized_sigma(t)
    }

    pub fn predict_loss(&self, sigma: f64, e: usize) -> Result<f64> {
        self.entry(e)?.predict_loss(sigma)
    }

    pub fn fit_step(&mut self, e: usize, batch: &[(f64, f64)], lr: f64) -> Result<()> {
        self.entry_mut(e)?.fit_step(batch, lr)
    }

    /// `(t, σ_e(t))` table over an even grid of `n` points, for plotting.
    pub fn grid(&self, n: usize) -> Vec<(f64, Vec<f64>)> {
        (0..n)
            .map(|i| {
                let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
                (t, self.entries.iter().map(|p| p.sigma_of_t(t)).collect())
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_examples() {
        assert_eq!(cdf_dalog(0.3, 0.3, 4.0).unwrap(), 0.5);
        assert_eq!(cdf_dalog(0.5, 0.25, 1.0).unwrap(), 0.75);
        assert!(cdf_dalog(1e-12, 0.25, 2.0).unwrap() < 1e-10);
        assert!(cdf_dalog(1.0 - 1e-12, 0.25, 2.0).unwrap() > 1.0 - 1e-10);
        assert!(cdf_dalog(0.0, 0.25, 1.0).is_err());
        assert!(cdf_dalog(1.0, 0.25, 1.0).is_err());
    }

    #[test]
    fn quantile_examples() {
        assert!((quantile_dalog(0.5, 0.37, 2.5).unwrap() - 0.37).abs() < 1e-15);
        assert!((quantile_dalog(0.75, 0.25, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(quantile_dalog(1.0, 0.25, 1.0).is_err());
    }

    #[test]
    fn pdf_example() {
        let f = pdf_dalog(0.25, 0.25, 1.0).unwrap();
        assert!((f - 4.0 / 3.0).abs() < 1e-12);
        assert!(pdf_dalog(1e-300, 0.25, 5.0).unwrap().is_finite());
    }

    #[test]
    fn sigma_of_t_examples() {
        let p = ScheduleParams::new(0.25, 1.0 + 1e-12, 1.0, 0.0, 80.0).unwrap();
        assert!((p.sigma_of_t(0.5) - 20.0).abs() < 1e-9);
        assert!(p.sigma_of_t(0.0) <= 1e-3 * 80.0);
        assert!(p.sigma_of_t(1.0) > 79.99);
        let q = ScheduleParams::new(0.5, 1.0 + 1e-12, 1.0, 0.0, 80.0).unwrap();
        for i in 1..100 {
            let t = i as f64 / 100.0;
            assert!(p.sigma_of_t(t) < q.sigma_of_t(t));
        }
    }

    #[test]
    fn predict_loss_examples() {
        let mut p = ScheduleParams::new(0.25, 1.0 + 1e-12, 1.0, 0.0, 80.0).unwrap();
        assert!((p.predict_loss(20.0).unwrap() - 0.5).abs() < 1e-12);
        assert!((p.predict_loss(40.0).unwrap() - 0.75).abs() < 1e-9);
        p.gamma_log = libm::log(2.0);
        assert!((p.predict_loss(20.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(p.predict_loss(81.0).is_err());
    }

    #[test]
    fn zero_lr_is_a_no_op() {
        let mut p = ScheduleParams::initial(0.0, 80.0).unwrap();
        let before = (p.mu_logit, p.nu_raw, p.gamma_log);
        p.fit_step(&[(10.0, 0.3), (50.0, 0.9)], 0.0).unwrap();
        assert_eq!(before, (p.mu_logit, p.nu_raw, p.gamma_log));
    }

    #[test]
    fn rejects_nan_loss() {
        let mut p = ScheduleParams::initial(0.0, 80.0).unwrap();
        assert!(p.fit_step(&[(10.0, f64::NAN)], 0.01).is_err());
    }

    #[test]
    fn constant_loss_pulls_gamma() {
        let mut p = ScheduleParams::initial(0.0, 1.0).unwrap();
        let c = 0.4;
        let batch: Vec<(f64, f64)> = (1..200).map(|i| (i as f64 / 200.0, c)).collect();
        let mut prev = p.fit_residual(&batch).unwrap();
        for _ in 0..100 {
            p.fit_step_normalized(&batch, FIT_LR).unwrap();
            let r = p.fit_residual(&batch).unwrap();
            assert!(r < prev, "residual rose: {prev} -> {r}");
            prev = r;
        }
        let g0 = 1.0;
        for _ in 0..2000 {
            p.fit_step_normalized(&batch, FIT_LR).unwrap();
        }
        assert!((p.gamma() - c).abs() < (g0 - c as f64).abs());
    }

    #[test]
    fn registry_layouts() {
        let b = SigmaBounds::default();
        let s = ScheduleRegistry::new(ScheduleMode::Single, 2, 3, b).unwrap();
        assert_eq!(s.entries.len(), 1);
        let t = ScheduleRegistry::new(ScheduleMode::PerType, 2, 3, b).unwrap();
        assert_eq!(t.entries.len(), 2);
        assert_eq!(t.entity_of(1), 0);
        assert_eq!(t.entity_of(2), 1);
        assert_eq!(t.entries[0].sigma_max, 80.0);
        assert_eq!(t.entries[1].sigma_max, 100.0);
        let f = ScheduleRegistry::new(ScheduleMode::PerFeature, 2, 3, b).unwrap();
        assert_eq!(f.entries.len(), 5);
        assert_eq!(f.features_of(3), alloc::vec![3]);
        assert!(f.sigma_of_t(0.5, 9).is_err());
        // single mode keeps the type-specific maximum
        assert!(s.feature_sigma(1.0, 4) > 99.9);
        assert!(s.feature_sigma(1.0, 0) < 80.0 + 1e-9);
    }
}
