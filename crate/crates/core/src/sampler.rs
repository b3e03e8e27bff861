//! Deterministic probability-flow sampling with feature-specific Euler
//! steps and score interpolation for categorical features.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::EdmCoefficients;
use crate::math::{argmax, softmax_in_place};
use crate::network::Network;
use crate::schedule::{ScheduleRegistry, T_EPS};
use crate::trainer::ModelLayout;

/// Conditioning label choice for conditional models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum CondChoice {
    /// Draw each row's label from the training proportions.
    #[default]
    FromProportions,
    Fixed(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub n_rows: usize,
    pub steps: usize,
    pub seed: u64,
    /// Index of the first generated row. Each row draws from its own RNG
    /// stream, so rows `[a, b)` are the same whichever run produces them.
    pub row_offset: u64,
    pub cond: CondChoice,
}

impl SampleConfig {
    pub fn new(n_rows: usize, seed: u64) -> Self {
        Self { n_rows, steps: 200, seed, row_offset: 0, cond: CondChoice::FromProportions }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_rows < 1 {
            return Err(Error::Config("number of rows must be at least 1".into()));
        }
        if self.steps < 1 {
            return Err(Error::Config("number of sampling steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Time grid `t_s = 1 − s/N`, `s = 0..=N`.
pub fn time_grid(steps: usize) -> Vec<f64> {
    (0..=steps).map(|s| 1.0 - s as f64 / steps as f64).collect()
}

/// Model predictions consumed by the sampler.
pub trait Denoiser: Sync {
    fn n_cont(&self) -> usize;
    fn cat_cardinalities(&self) -> &[usize];
    fn embed_dim(&self) -> usize;

    /// Clean embeddings (unit row plus feature bias) of categorical feature
    /// `j`, `C_j × d`.
    fn clean_embeddings(&self, j: usize) -> &[f64];

    /// For a batch of noisy states at time `t` with per-feature noise levels
    /// `sigmas` (model order), write the denoised continuous values
    /// (`B × K_cont`) and the class probabilities (`B × ΣC_j`).
    fn denoise(
        &self,
        state: &SamplerState,
        t: f64,
        sigmas: &[f64],
        cond: Option<&[u32]>,
        cont_hat: &mut [f64],
        probs: &mut [f64],
    ) -> Result<()>;
}

/// Noisy states for a block of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerState {
    pub n_rows: usize,
    /// `B × K_cont`
    pub cont: Vec<f64>,
    /// `B × (K_cat · d)`
    pub cat: Vec<f64>,
}

/// Decoded rows in standardized / integer-coded form, column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub cont: Vec<Vec<f64>>,
    /// Diffused categorical features in model order.
    pub cat: Vec<Vec<u32>>,
    pub cond: Option<Vec<u32>>,
}

impl Generated {
    /// Reassemble categorical columns in dataset order, inserting the
    /// conditioning label where it belongs.
    pub fn dataset_cat_columns(&self, layout: &ModelLayout) -> Vec<Vec<u32>> {
        let n_total = layout.cat_cols.len() + usize::from(layout.cond_col.is_some());
        let mut out = vec![Vec::new(); n_total];
        for (j, &col) in layout.cat_cols.iter().enumerate() {
            out[col] = self.cat[j].clone();
        }
        if let (Some(col), Some(y)) = (layout.cond_col, &self.cond) {
            out[col] = y.clone();
        }
        out
    }

    pub fn append(&mut self, other: Generated) {
        for (a, b) in self.cont.iter_mut().zip(other.cont) {
            a.extend(b);
        }
        for (a, b) in self.cat.iter_mut().zip(other.cat) {
            a.extend(b);
        }
        if let (Some(a), Some(b)) = (&mut self.cond, other.cond) {
            a.extend(b);
        }
    }
}

/// RNG for row `row` of a run seeded with `seed`.
pub fn row_rng(seed: u64, row: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row);
    rng
}

/// Prior draws: continuous scalars ~ N(0, σ_k(1)²), embedding states
/// ~ N(0, σ_k(1)² I_d), one RNG stream per row.
pub fn sample_prior(
    registry: &ScheduleRegistry,
    embed_dim: usize,
    seed: u64,
    row_offset: u64,
    n_rows: usize,
) -> (SamplerState, Vec<ChaCha8Rng>) {
    let kc = registry.n_cont;
    let kt = registry.n_cat;
    let mut cont = vec![0.0; n_rows * kc];
    let mut cat = vec![0.0; n_rows * kt * embed_dim];
    let mut rngs = Vec::with_capacity(n_rows);
    for i in 0..n_rows {
        let mut rng = row_rng(seed, row_offset + i as u64);
        for k in 0..kc {
            let e: f64 = StandardNormal.sample(&mut rng);
            cont[i * kc + k] = registry.feature_sigma(1.0, k) * e;
        }
        for j in 0..kt {
            let s = registry.feature_sigma(1.0, kc + j);
            for q in 0..embed_dim {
                let e: f64 = StandardNormal.sample(&mut rng);
                cat[(i * kt + j) * embed_dim + q] = s * e;
            }
        }
        rngs.push(rng);
    }
    (SamplerState { n_rows, cont, cat }, rngs)
}

/// Score-interpolated drift `(x_t − Σ_c p_c e_c) / σ` for one categorical
/// feature. `embeddings` is `C × d`.
pub fn categorical_drift(x_t: &[f64], probs: &[f64], embeddings: &[f64], sigma: f64, out: &mut [f64]) -> Result<()> {
    if !(sigma > 0.0) {
        return Err(Error::Domain { what: "sigma in categorical drift", value: sigma });
    }
    let d = x_t.len();
    if embeddings.len() != probs.len() * d || out.len() != d {
        return Err(Error::Shape("categorical drift shapes disagree".into()));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::Domain { what: "probability mass", value: total });
    }
    out.copy_from_slice(x_t);
    for (&p, e) in probs.iter().zip(embeddings.chunks_exact(d)) {
        for (o, &v) in out.iter_mut().zip(e) {
            *o -= p * v;
        }
    }
    out.iter_mut().for_each(|o| *o /= sigma);
    Ok(())
}

fn feature_sigmas(registry: &ScheduleRegistry, t: f64) -> Vec<f64> {
    (0..registry.n_features()).map(|k| registry.feature_sigma(t, k)).collect()
}

/// One Euler step from `t_s` to `t_next`; every feature moves by its own
/// `Δσ_k = σ_k(t_next) − σ_k(t_s)`.
pub fn euler_step<D: Denoiser + ?Sized>(
    model: &D,
    registry: &ScheduleRegistry,
    state: &mut SamplerState,
    cond: Option<&[u32]>,
    t_s: f64,
    t_next: f64,
) -> Result<()> {
    if !(t_next < t_s) {
        return Err(Error::Domain { what: "t_next must be below t_s", value: t_next });
    }
    let kc = model.n_cont();
    let cards = model.cat_cardinalities();
    let d = model.embed_dim();
    let kt = cards.len();
    let b = state.n_rows;
    let sig = feature_sigmas(registry, t_s);
    let sig_next = feature_sigmas(registry, t_next);
    if let Some(k) = sig.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::Domain { what: "sigma mid-trajectory", value: sig[k] });
    }
    let total: usize = cards.iter().sum();
    let mut cont_hat = vec![0.0; b * kc];
    let mut probs = vec![0.0; b * total];
    model.denoise(state, t_s, &sig, cond, &mut cont_hat, &mut probs)?;

    for i in 0..b {
        for k in 0..kc {
            let x = &mut state.cont[i * kc + k];
            let dx = (*x - cont_hat[i * kc + k]) / sig[k];
            *x += (sig_next[k] - sig[k]) * dx;
        }
    }
    let mut drift = vec![0.0; d];
    for i in 0..b {
        let mut off = 0;
        for (j, &c) in cards.iter().enumerate() {
            let k = kc + j;
            let x = &mut state.cat[(i * kt + j) * d..(i * kt + j + 1) * d];
            let p = &probs[i * total + off..i * total + off + c];
            categorical_drift(x, p, model.clean_embeddings(j), sig[k], &mut drift)?;
            let ds = sig_next[k] - sig[k];
            for (v, &g) in x.iter_mut().zip(&drift) {
                *v += ds * g;
            }
            off += c;
        }
    }
    Ok(())
}

/// Final pass at the end of the grid: continuous features take the
/// denoised estimate, categorical features the most likely class (lowest
/// code on ties).
pub fn decode_final<D: Denoiser + ?Sized>(
    model: &D,
    registry: &ScheduleRegistry,
    state: &SamplerState,
    cond: Option<&[u32]>,
    t_final: f64,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<u32>>)> {
    let t = t_final.max(T_EPS);
    let kc = model.n_cont();
    let cards = model.cat_cardinalities();
    let b = state.n_rows;
    let sig = feature_sigmas(registry, t);
    let total: usize = cards.iter().sum();
    let mut cont_hat = vec![0.0; b * kc];
    let mut probs = vec![0.0; b * total];
    model.denoise(state, t, &sig, cond, &mut cont_hat, &mut probs)?;
    let cont: Vec<Vec<f64>> = (0..kc).map(|k| (0..b).map(|i| cont_hat[i * kc + k]).collect()).collect();
    let mut cat = vec![Vec::with_capacity(b); cards.len()];
    for i in 0..b {
        let mut off = 0;
        for (j, &c) in cards.iter().enumerate() {
            cat[j].push(argmax(&probs[i * total + off..i * total + off + c]) as u32);
            off += c;
        }
    }
    Ok((cont, cat))
}

/// Draw a label from `proportions` using one uniform variate.
pub fn draw_label<R: Rng + ?Sized>(proportions: &[f64], rng: &mut R) -> u32 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (c, &p) in proportions.iter().enumerate() {
        acc += p;
        if u < acc {
            return c as u32;
        }
    }
    (proportions.len() - 1) as u32
}

/// Generate rows `[row_offset, row_offset + n_rows)` of the run.
pub fn generate_block<D: Denoiser + ?Sized>(
    model: &D,
    registry: &ScheduleRegistry,
    cond_proportions: Option<&[f64]>,
    config: &SampleConfig,
) -> Result<Generated> {
    config.validate()?;
    if registry.n_cont != model.n_cont() || registry.n_cat != model.cat_cardinalities().len() {
        return Err(Error::Shape("schedule registry does not match the model".into()));
    }
    let (mut state, mut rngs) =
        sample_prior(registry, model.embed_dim(), config.seed, config.row_offset, config.n_rows);
    let cond: Option<Vec<u32>> = cond_proportions.map(|p| match config.cond {
        CondChoice::FromProportions => rngs.iter_mut().map(|r| draw_label(p, r)).collect(),
        CondChoice::Fixed(c) => vec![c; config.n_rows],
    });
    if let (Some(p), CondChoice::Fixed(c)) = (cond_proportions, config.cond) {
        if c as usize >= p.len() {
            return Err(Error::Config(format!("conditioning class {c} out of range")));
        }
    }
    let grid = time_grid(config.steps);
    for s in 0..config.steps {
        euler_step(model, registry, &mut state, cond.as_deref(), grid[s], grid[s + 1])?;
    }
    let (cont, cat) = decode_final(model, registry, &state, cond.as_deref(), grid[config.steps])?;
    Ok(Generated { cont, cat, cond })
}

/// Adapter running a trained [`Network`] as a [`Denoiser`].
pub struct NetworkDenoiser<'a> {
    net: &'a Network<f32>,
    embeddings: Vec<Vec<f64>>,
}

impl<'a> NetworkDenoiser<'a> {
    pub fn new(net: &'a Network<f32>) -> Result<Self> {
        let d = net.config.embed_dim;
        let mut embeddings = Vec::with_capacity(net.config.n_cat());
        for (j, &c) in net.config.cat_cardinalities.iter().enumerate() {
            let mut e = vec![0.0; c * d];
            for code in 0..c {
                net.params.embedding(j, code, &mut e[code * d..(code + 1) * d])?;
            }
            embeddings.push(e);
        }
        Ok(Self { net, embeddings })
    }
}

impl Denoiser for NetworkDenoiser<'_> {
    fn n_cont(&self) -> usize {
        self.net.config.n_cont
    }

    fn cat_cardinalities(&self) -> &[usize] {
        &self.net.config.cat_cardinalities
    }

    fn embed_dim(&self) -> usize {
        self.net.config.embed_dim
    }

    fn clean_embeddings(&self, j: usize) -> &[f64] {
        &self.embeddings[j]
    }

    fn denoise(
        &self,
        state: &SamplerState,
        t: f64,
        sigmas: &[f64],
        cond: Option<&[u32]>,
        cont_hat: &mut [f64],
        probs: &mut [f64],
    ) -> Result<()> {
        let cfg = &self.net.config;
        let kc = cfg.n_cont;
        let kt = cfg.n_cat();
        let d = cfg.embed_dim;
        let in_dim = cfg.input_dim();
        let b = state.n_rows;
        let coef: Vec<EdmCoefficients> = sigmas.iter().map(|&s| EdmCoefficients::new(s)).collect();
        let mut inputs = vec![0.0f32; b * in_dim];
        for i in 0..b {
            for k in 0..kc {
                inputs[i * in_dim + k] = (coef[k].c_in * state.cont[i * kc + k]) as f32;
            }
            for j in 0..kt {
                let c_in = coef[kc + j].c_in;
                for q in 0..d {
                    inputs[i * in_dim + kc + j * d + q] = (c_in * state.cat[(i * kt + j) * d + q]) as f32;
                }
            }
        }
        let times = vec![t; b];
        let out = self.net.forward(&inputs, &times, cond)?;
        for i in 0..b {
            for k in 0..kc {
                cont_hat[i * kc + k] = coef[k].denoise(state.cont[i * kc + k], out.cont[i * kc + k] as f64);
            }
        }
        for (p, &l) in probs.iter_mut().zip(&out.logits) {
            *p = l as f64;
        }
        let total = cfg.total_classes();
        let offsets = cfg.logit_offsets();
        for row in probs.chunks_exact_mut(total) {
            for j in 0..kt {
                softmax_in_place(&mut row[offsets[j]..offsets[j + 1]]);
            }
        }
        Ok(())
    }
}
