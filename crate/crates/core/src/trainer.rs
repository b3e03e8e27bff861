//! Training loop: noising, calibrated losses, optimizer, EMA, and online
//! fitting of the noise schedules and the loss normalizer.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{antithetic_timesteps, ce_loss_cat, mse_loss_cont, EdmCoefficients, LossNormalizer};
use crate::network::{ema_update, Adam, Gradients, Network, NetworkConfig, Parameters};
use crate::preprocess::{Dataset, PreprocState};
use crate::schedule::{ScheduleMode, ScheduleRegistry, SigmaBounds, FIT_LR};

/// Loss above which training is considered diverged.
pub const DIVERGENCE_LOSS: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch: usize,
    pub lr: f64,
    pub warmup: u64,
    pub ema_decay: f64,
    pub seed: u64,
    pub mode: ScheduleMode,
    /// Emit a progress record every this many steps (0 disables).
    pub log_every: u64,
    /// Validation cadence in steps (0 disables).
    pub valid_every: u64,
    /// Maximum number of validation rows scored per check.
    pub valid_rows: usize,
    pub trunk_width: usize,
    pub proj_dim: usize,
    pub embed_dim: usize,
    /// Condition on the schema's categorical target instead of diffusing it.
    pub conditional: bool,
    pub schedule_lr: f64,
    pub normalizer_lr: f64,
    /// When false the noise schedules stay at their initial values.
    pub fit_schedules: bool,
    /// Loss the schedules are fitted to.
    pub schedule_loss: ScheduleLoss,
    pub fit_normalizer: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 30_000,
            batch: 4096,
            lr: 1e-3,
            warmup: 1000,
            ema_decay: 0.999,
            seed: 0,
            mode: ScheduleMode::PerType,
            log_every: 100,
            valid_every: 500,
            valid_rows: 4096,
            trunk_width: 796,
            proj_dim: 256,
            embed_dim: 16,
            conditional: false,
            schedule_lr: FIT_LR,
            normalizer_lr: 1e-3,
            fit_schedules: true,
            schedule_loss: ScheduleLoss::Unweighted,
            fit_normalizer: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 1 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        if self.batch < 1 {
            return Err(Error::Config("batch must be at least 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("invalid learning rate {}", self.lr)));
        }
        if self.warmup >= self.steps {
            return Err(Error::Config(format!("warmup ({}) must be shorter than steps ({})", self.warmup, self.steps)));
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return Err(Error::Config(format!("ema_decay must lie in [0, 1), got {}", self.ema_decay)));
        }
        if !(self.schedule_lr >= 0.0 && self.normalizer_lr >= 0.0) {
            return Err(Error::Config("fit learning rates must be non-negative".into()));
        }
        Ok(())
    }

    /// Learning rate used by 1-based step `k`: linear warmup, then linear
    /// decay reaching zero at the final step.
    pub fn lr_at(&self, k: u64) -> f64 {
        if k <= self.warmup {
            self.lr * k as f64 / self.warmup.max(1) as f64
        } else {
            self.lr * self.steps.saturating_sub(k) as f64 / (self.steps - self.warmup) as f64
        }
    }
}

/// Per-feature loss observed by the schedule fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleLoss {
    /// Plain squared error `(D − x0)²` for continuous features; entropy-scaled
    /// cross entropy for categorical ones. Both rise monotonically with σ.
    Unweighted,
    /// The calibrated losses the network is trained on (`λ(σ)`-weighted
    /// squared error for continuous features).
    Calibrated,
}

/// How dataset columns map onto the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelLayout {
    pub n_cont: usize,
    /// Dataset categorical columns that are diffused, in model order.
    pub cat_cols: Vec<usize>,
    /// Dataset categorical column used as conditioning label.
    pub cond_col: Option<usize>,
    /// Training proportions of the conditioning label.
    pub cond_proportions: Vec<f64>,
    /// Entropy (nats) of each diffused categorical feature.
    pub cat_entropy: Vec<f64>,
    /// Feature names in model order.
    pub names: Vec<String>,
}

impl ModelLayout {
    pub fn new(preproc: &PreprocState, conditional: bool) -> Result<Self> {
        let schema = &preproc.schema;
        let cond_col = if conditional {
            let target = schema
                .categorical_target()
                .ok_or_else(|| Error::Config("conditional training needs a categorical target".into()))?;
            Some(schema.cat_indices().iter().position(|&j| j == target).expect("target is categorical"))
        } else {
            None
        };
        let cat_cols: Vec<usize> = (0..preproc.cat.len()).filter(|&c| Some(c) != cond_col).collect();
        let mut names: Vec<String> = schema.cont_indices().iter().map(|&j| schema.features[j].name.clone()).collect();
        let cat_idx = schema.cat_indices();
        names.extend(cat_cols.iter().map(|&c| schema.features[cat_idx[c]].name.clone()));
        Ok(Self {
            n_cont: preproc.cont.len(),
            cat_entropy: cat_cols.iter().map(|&c| preproc.cat[c].entropy).collect(),
            cond_proportions: cond_col.map(|c| preproc.cat[c].proportions.clone()).unwrap_or_default(),
            cat_cols,
            cond_col,
            names,
        })
    }

    pub fn n_cat(&self) -> usize {
        self.cat_cols.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_cont + self.n_cat()
    }
}

/// Per-step summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    pub step: u64,
    /// Mean calibrated joint loss (before time normalization).
    pub loss: f64,
    pub loss_cont: f64,
    pub loss_cat: f64,
    /// Mean time-normalized loss, the quantity actually minimized.
    pub loss_normalized: f64,
    pub lr: f64,
}

impl fmt::Display for StepMetrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "step={} loss={:.6} loss_cont={:.6} loss_cat={:.6} lr={:.6e}",
            self.step, self.loss, self.loss_cont, self.loss_cat, self.lr
        )
    }
}

/// Hooks called by [`train`].
pub trait TrainObserver {
    fn on_step(&mut self, _metrics: &StepMetrics) {}
    fn on_validation(&mut self, _step: u64, _loss: f64) {}
}

/// Observer that ignores everything.
pub struct Silent;

impl TrainObserver for Silent {}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub steps: u64,
    pub final_loss: f64,
    /// Mean joint loss over the last (up to) 100 steps.
    pub tail_loss: f64,
    pub validation: Vec<(u64, f64)>,
}

/// Per-sample, per-feature losses of one batch.
struct BatchEval {
    times: Vec<f64>,
    /// Calibrated losses, `B × K`, model order.
    losses: Vec<f64>,
    /// Continuous squared errors without the `λ(σ)` weight, `B × K_cont`.
    sq_err: Vec<f64>,
}

/// Complete mutable training state.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub config: TrainConfig,
    pub layout: ModelLayout,
    pub net: Network<f32>,
    pub ema: Parameters<f32>,
    pub adam: Adam<f32>,
    pub registry: ScheduleRegistry,
    pub normalizer: LossNormalizer,
    pub step: u64,
    rng: ChaCha8Rng,
}

impl TrainState {
    pub fn new(config: &TrainConfig, preproc: &PreprocState) -> Result<Self> {
        config.validate()?;
        let layout = ModelLayout::new(preproc, config.conditional)?;
        let mut net_cfg = NetworkConfig::new(layout.n_cont, layout.cat_cols.iter().map(|&c| preproc.cat[c].cardinality()).collect());
        net_cfg.trunk_width = config.trunk_width;
        net_cfg.proj_dim = config.proj_dim;
        net_cfg.embed_dim = config.embed_dim;
        net_cfg.cond_classes = layout.cond_col.map(|c| preproc.cat[c].cardinality());
        let proportions: Vec<Vec<f64>> = layout.cat_cols.iter().map(|&c| preproc.cat[c].proportions.clone()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = Parameters::<f32>::init(&net_cfg, &proportions, &mut rng)?;
        let net = Network::new(net_cfg, params)?;
        let registry = ScheduleRegistry::new(config.mode, layout.n_cont, layout.n_cat(), SigmaBounds::default())?;
        let normalizer = LossNormalizer::new(config.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
        Ok(Self {
            config: config.clone(),
            layout,
            ema: net.params.clone(),
            adam: Adam::new(&net.params),
            net,
            registry,
            normalizer,
            step: 0,
            rng,
        })
    }

    /// Network carrying the EMA weights with embedding rows re-normalized,
    /// as used for sampling.
    pub fn sampling_network(&self) -> Network<f32> {
        let mut params = self.ema.clone();
        params.normalize_embeddings();
        Network { config: self.net.config.clone(), params }
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        if data.cont.len() != self.layout.n_cont
            || data.cat.len() != self.layout.cat_cols.len() + usize::from(self.layout.cond_col.is_some())
        {
            return Err(Error::Shape("dataset columns do not match the model layout".into()));
        }
        Ok(())
    }

    /// Noise the rows at the given times, run the network and compute the
    /// calibrated losses. When `grads` is given, accumulates the gradient
    /// of the time-normalized joint loss (mean over the batch).
    fn evaluate<R: rand::Rng>(
        &self,
        net: &Network<f32>,
        data: &Dataset,
        rows: &[usize],
        times: Vec<f64>,
        rng: &mut R,
        grads: Option<&mut Gradients<f32>>,
    ) -> Result<BatchEval> {
        let b = rows.len();
        let lay = &self.layout;
        let kc = lay.n_cont;
        let kk = lay.n_features();
        let d = net.config.embed_dim;
        let in_dim = net.config.input_dim();

        let mut sigmas = vec![0.0f64; b * kk];
        for (i, &t) in times.iter().enumerate() {
            for k in 0..kk {
                sigmas[i * kk + k] = self.registry.feature_sigma(t, k);
            }
        }

        // Clean targets and noisy states.
        let mut x_t = vec![0.0f64; b * in_dim];
        let mut x0_cont = vec![0.0f64; b * kc];
        let mut clean = vec![0.0f64; d];
        for (i, &r) in rows.iter().enumerate() {
            let row = &mut x_t[i * in_dim..(i + 1) * in_dim];
            for k in 0..kc {
                let x0 = data.cont[k][r];
                x0_cont[i * kc + k] = x0;
                let eps: f64 = StandardNormal.sample(rng);
                row[k] = x0 + sigmas[i * kk + k] * eps;
            }
            for (j, &col) in lay.cat_cols.iter().enumerate() {
                net.params.embedding(j, data.cat[col][r] as usize, &mut clean)?;
                let s = sigmas[i * kk + kc + j];
                for (q, &c) in clean.iter().enumerate() {
                    let eps: f64 = StandardNormal.sample(rng);
                    row[kc + j * d + q] = c + s * eps;
                }
            }
        }
        let mut inputs = vec![0.0f32; b * in_dim];
        for i in 0..b {
            for k in 0..kc {
                let c_in = EdmCoefficients::new(sigmas[i * kk + k]).c_in;
                inputs[i * in_dim + k] = (c_in * x_t[i * in_dim + k]) as f32;
            }
            for j in 0..lay.n_cat() {
                let c_in = EdmCoefficients::new(sigmas[i * kk + kc + j]).c_in;
                for q in 0..d {
                    let idx = i * in_dim + kc + j * d + q;
                    inputs[idx] = (c_in * x_t[idx]) as f32;
                }
            }
        }
        let cond: Option<Vec<u32>> = lay.cond_col.map(|c| rows.iter().map(|&r| data.cat[c][r]).collect());

        let (out, tape) = if grads.is_some() {
            let (o, t) = net.forward_recorded(&inputs, &times, cond.as_deref())?;
            (o, Some(t))
        } else {
            (net.forward(&inputs, &times, cond.as_deref())?, None)
        };

        let total = net.config.total_classes();
        let offsets = net.config.logit_offsets();
        let mut losses = vec![0.0f64; b * kk];
        let mut sq_err = vec![0.0f64; b * kc];
        let mut d_cont = vec![0.0f32; b * kc];
        let mut d_logits = vec![0.0f32; b * total];
        let mut logit_buf: Vec<f64> = Vec::new();
        let mut grad_buf: Vec<f64> = Vec::new();
        for i in 0..b {
            let w = 1.0 / (b as f64 * kk as f64 * self.normalizer.predict(times[i]));
            for k in 0..kc {
                let f = out.cont[i * kc + k] as f64;
                let (l, g) = mse_loss_cont(x0_cont[i * kc + k], x_t[i * in_dim + k], f, sigmas[i * kk + k]);
                losses[i * kk + k] = l;
                sq_err[i * kc + k] = l / EdmCoefficients::new(sigmas[i * kk + k]).lambda;
                d_cont[i * kc + k] = (g * w) as f32;
            }
            for (j, &col) in lay.cat_cols.iter().enumerate() {
                let (lo, hi) = (offsets[j], offsets[j + 1]);
                logit_buf.clear();
                logit_buf.extend(out.logits[i * total + lo..i * total + hi].iter().map(|&v| v as f64));
                grad_buf.clear();
                grad_buf.resize(hi - lo, 0.0);
                let code = data.cat[col][rows[i]] as usize;
                let l = ce_loss_cat(code, &logit_buf, lay.cat_entropy[j], &mut grad_buf)?;
                losses[i * kk + kc + j] = l;
                for (dst, &g) in d_logits[i * total + lo..i * total + hi].iter_mut().zip(&grad_buf) {
                    *dst = (g * w) as f32;
                }
            }
            for k in 0..kk {
                let l = losses[i * kk + k];
                if !l.is_finite() {
                    return Err(Error::NonFiniteLoss { feature: lay.names[k].clone(), t: times[i] });
                }
            }
        }

        if let (Some(grads), Some(tape)) = (grads, tape) {
            let d_inputs = net.backward(&tape, &d_cont, &d_logits, grads)?;
            for (i, &r) in rows.iter().enumerate() {
                for (j, &col) in lay.cat_cols.iter().enumerate() {
                    let c_in = EdmCoefficients::new(sigmas[i * kk + kc + j]).c_in as f32;
                    let code = data.cat[col][r] as usize;
                    let src = &d_inputs[i * in_dim + kc + j * d..i * in_dim + kc + (j + 1) * d];
                    let emb = &mut grads.cat_embed[j].data[code * d..(code + 1) * d];
                    for (e, &g) in emb.iter_mut().zip(src) {
                        *e += c_in * g;
                    }
                    let bias = &mut grads.cat_bias.data[j * d..(j + 1) * d];
                    for (e, &g) in bias.iter_mut().zip(src) {
                        *e += c_in * g;
                    }
                }
            }
        }
        Ok(BatchEval { times, losses, sq_err })
    }

    /// Mean calibrated loss of every feature at a fixed `t`, estimated on
    /// `rows` with the live weights and no parameter update.
    pub fn feature_losses_at(&self, data: &Dataset, rows: &[usize], t: f64, seed: u64) -> Result<Vec<f64>> {
        self.check_data(data)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ev = self.evaluate(&self.net, data, rows, vec![t; rows.len()], &mut rng, None)?;
        Ok(per_feature_mean(&ev.losses, self.layout.n_features()))
    }

    /// Mean joint loss on `rows` under the EMA weights, with noise drawn
    /// from a fixed seed so repeated checks are comparable.
    pub fn validation_loss(&self, data: &Dataset, rows: &[usize]) -> Result<f64> {
        self.check_data(data)?;
        if rows.is_empty() {
            return Err(Error::Data("empty validation set".into()));
        }
        let net = self.sampling_network();
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ 0x5eed_da7a);
        let times = antithetic_timesteps(rows.len(), &mut rng);
        let ev = self.evaluate(&net, data, rows, times, &mut rng, None)?;
        Ok(ev.losses.iter().sum::<f64>() / ev.losses.len() as f64)
    }

    /// One optimization step on the given rows.
    pub fn train_step(&mut self, data: &Dataset, rows: &[usize]) -> Result<StepMetrics> {
        self.check_data(data)?;
        if rows.is_empty() {
            return Err(Error::Data("empty minibatch".into()));
        }
        let k_step = self.step + 1;
        let lr = self.config.lr_at(k_step);
        let mut rng = self.rng.clone();
        let times = antithetic_timesteps(rows.len(), &mut rng);
        let mut grads = self.net.params.zeros_like();
        let ev = self.evaluate(&self.net, data, rows, times, &mut rng, Some(&mut grads))?;
        self.rng = rng;

        let kk = self.layout.n_features();
        let kc = self.layout.n_cont;
        let b = rows.len();
        if let Some(pos) = ev.losses.iter().position(|l| !l.is_finite()) {
            let feature = self.layout.names.get(pos % kk).cloned().unwrap_or_default();
            return Err(Error::NonFiniteLoss { feature, t: ev.times[pos / kk] });
        }
        let joint: Vec<f64> = ev.losses.chunks_exact(kk).map(|r| r.iter().sum::<f64>() / kk as f64).collect();
        let loss = joint.iter().sum::<f64>() / b as f64;
        let loss_normalized =
            joint.iter().zip(&ev.times).map(|(&l, &t)| self.normalizer.normalize(l, t)).sum::<f64>() / b as f64;
        if loss > DIVERGENCE_LOSS {
            return Err(Error::Diverged { step: k_step, loss });
        }
        let per_feature = per_feature_mean(&ev.losses, kk);
        let loss_cont = mean_or_zero(&per_feature[..kc]);
        let loss_cat = mean_or_zero(&per_feature[kc..]);

        self.adam.step(&mut self.net.params, &grads, lr);
        if lr > 0.0 {
            self.net.params.normalize_embeddings();
        }
        ema_update(&mut self.ema, &self.net.params, self.config.ema_decay);

        if self.config.fit_schedules {
            for e in 0..self.registry.entries.len() {
                let feats = self.registry.features_of(e);
                if feats.is_empty() {
                    continue;
                }
                let entry = &self.registry.entries[e];
                let unweighted = self.config.schedule_loss == ScheduleLoss::Unweighted;
                let observed = |i: usize, k: usize| {
                    if unweighted && k < kc {
                        ev.sq_err[i * kc + k]
                    } else {
                        ev.losses[i * kk + k]
                    }
                };
                let batch: Vec<(f64, f64)> = ev
                    .times
                    .iter()
                    .enumerate()
                    .map(|(i, &t)| {
                        let l = feats.iter().map(|&k| observed(i, k)).sum::<f64>() / feats.len() as f64;
                        (entry.normalized_sigma(t), l)
                    })
                    .collect();
                self.registry.entries[e].fit_step_normalized(&batch, self.config.schedule_lr)?;
            }
        }
        if self.config.fit_normalizer {
            let batch: Vec<(f64, f64)> = ev.times.iter().copied().zip(joint.iter().copied()).collect();
            self.normalizer.fit_step(&batch, self.config.normalizer_lr);
        }
        self.step = k_step;
        Ok(StepMetrics { step: k_step, loss, loss_cont, loss_cat, loss_normalized, lr })
    }
}

fn per_feature_mean(losses: &[f64], kk: usize) -> Vec<f64> {
    let n = losses.len() / kk.max(1);
    let mut out = vec![0.0; kk];
    for row in losses.chunks_exact(kk) {
        for (o, &l) in out.iter_mut().zip(row) {
            *o += l;
        }
    }
    out.iter_mut().for_each(|o| *o /= n as f64);
    out
}

fn mean_or_zero(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Run the configured number of steps over shuffled minibatches of
/// `train`, checking `valid` periodically with the EMA weights.
pub fn train(
    state: &mut TrainState,
    train_data: &Dataset,
    valid: Option<&Dataset>,
    observer: &mut dyn TrainObserver,
) -> Result<TrainSummary> {
    state.check_data(train_data)?;
    let n = train_data.n_rows;
    if n == 0 {
        return Err(Error::Data("empty training set".into()));
    }
    let batch = state.config.batch.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(state.config.seed.wrapping_mul(0x2545_f491_4f6c_dd1d) ^ 0xb47c);
    order.shuffle(&mut shuffle_rng);
    let mut cursor = 0;
    let valid_rows: Vec<usize> = valid.map(|v| (0..v.n_rows.min(state.config.valid_rows)).collect()).unwrap_or_default();

    let mut tail: Vec<f64> = Vec::new();
    let mut validation = Vec::new();
    let mut last = 0.0;
    while state.step < state.config.steps {
        if cursor + batch > n {
            order.shuffle(&mut shuffle_rng);
            cursor = 0;
        }
        let rows = &order[cursor..cursor + batch];
        cursor += batch;
        let m = state.train_step(train_data, rows)?;
        last = m.loss;
        tail.push(m.loss);
        if tail.len() > 100 {
            tail.remove(0);
        }
        let log_every = state.config.log_every;
        if log_every > 0 && (m.step % log_every == 0 || m.step == state.config.steps) {
            observer.on_step(&m);
        }
        let valid_every = state.config.valid_every;
        if let Some(v) = valid {
            if valid_every > 0 && !valid_rows.is_empty() && (m.step % valid_every == 0 || m.step == state.config.steps) {
                let vl = state.validation_loss(v, &valid_rows)?;
                validation.push((m.step, vl));
                observer.on_validation(m.step, vl);
            }
        }
    }
    let tail_loss = if tail.is_empty() { last } else { tail.iter().sum::<f64>() / tail.len() as f64 };
    Ok(TrainSummary { steps: state.step, final_loss: last, tail_loss, validation })
}
