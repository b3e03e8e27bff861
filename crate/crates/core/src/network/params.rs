use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use super::{NetworkConfig, TRUNK_DEPTH};
use crate::error::{Error, Result};
use crate::math::Real;

/// Named dense tensor, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(name: String, dims: Vec<usize>) -> Self {
        let n = dims.iter().product();
        Self { name, dims, data: vec![T::zero(); n] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            name: self.name.clone(),
            dims: self.dims.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }
}

/// All trainable weights. The same layout doubles as the gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters<T> {
    /// Per categorical feature, `C_j × d`. Rows are kept at unit L2 norm.
    pub cat_embed: Vec<Tensor<T>>,
    /// Feature biases, `K_cat × d`.
    pub cat_bias: Tensor<T>,
    pub in_w: Tensor<T>,
    pub in_b: Tensor<T>,
    pub time_w: Tensor<T>,
    pub time_b: Tensor<T>,
    pub cond_embed: Option<Tensor<T>>,
    pub trunk_w: Vec<Tensor<T>>,
    pub trunk_b: Vec<Tensor<T>>,
    pub head_cont_w: Tensor<T>,
    pub head_cont_b: Tensor<T>,
    pub head_cat_w: Vec<Tensor<T>>,
    pub head_cat_b: Vec<Tensor<T>>,
}

/// Gradient buffers aligned with [`Parameters`].
pub type Gradients<T> = Parameters<T>;

impl<T: Real> Parameters<T> {
    /// All-zero tensors with the layout implied by `cfg`.
    pub fn zeros(cfg: &NetworkConfig) -> Self {
        let d = cfg.embed_dim;
        let p = cfg.proj_dim;
        let w = cfg.trunk_width;
        let z = |name: String, dims: Vec<usize>| Tensor::zeros(name, dims);
        let mut trunk_w = Vec::with_capacity(TRUNK_DEPTH);
        let mut trunk_b = Vec::with_capacity(TRUNK_DEPTH);
        for l in 0..TRUNK_DEPTH {
            let fan_in = if l == 0 { p } else { w };
            trunk_w.push(z(format!("trunk.{l}.weight"), vec![fan_in, w]));
            trunk_b.push(z(format!("trunk.{l}.bias"), vec![w]));
        }
        Self {
            cat_embed: cfg
                .cat_cardinalities
                .iter()
                .enumerate()
                .map(|(j, &c)| z(format!("cat_embed.{j}"), vec![c, d]))
                .collect(),
            cat_bias: z("cat_bias".into(), vec![cfg.n_cat(), d]),
            in_w: z("in_proj.weight".into(), vec![cfg.input_dim(), p]),
            in_b: z("in_proj.bias".into(), vec![p]),
            time_w: z("time_proj.weight".into(), vec![2 * cfg.time_freqs, p]),
            time_b: z("time_proj.bias".into(), vec![p]),
            cond_embed: cfg.cond_classes.map(|c| z("cond_embed".into(), vec![c, p])),
            trunk_w,
            trunk_b,
            head_cont_w: z("head_cont.weight".into(), vec![w, cfg.n_cont]),
            head_cont_b: z("head_cont.bias".into(), vec![cfg.n_cont]),
            head_cat_w: cfg
                .cat_cardinalities
                .iter()
                .enumerate()
                .map(|(j, &c)| z(format!("head_cat.{j}.weight"), vec![w, c]))
                .collect(),
            head_cat_b: cfg
                .cat_cardinalities
                .iter()
                .enumerate()
                .map(|(j, &c)| z(format!("head_cat.{j}.bias"), vec![c]))
                .collect(),
        }
    }

    /// Initialization that makes the untrained model a no-information
    /// predictor: zero continuous head, categorical head biases at the log
    /// training proportions, zero head weights.
    pub fn init<R: Rng + ?Sized>(cfg: &NetworkConfig, proportions: &[Vec<f64>], rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        if proportions.len() != cfg.n_cat()
            || proportions.iter().zip(&cfg.cat_cardinalities).any(|(p, &c)| p.len() != c)
        {
            return Err(Error::Shape("class proportions do not match the categorical cardinalities".into()));
        }
        let mut p = Self::zeros(cfg);
        for e in &mut p.cat_embed {
            for v in &mut e.data {
                let x: f64 = StandardNormal.sample(rng);
                *v = T::from_f64(x * cfg.sigma_init);
            }
        }
        p.normalize_embeddings();
        let mut uniform = |t: &mut Tensor<T>, fan_in: usize| {
            let bound = 1.0 / libm::sqrt(fan_in as f64);
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            for v in &mut t.data {
                *v = T::from_f64(dist.sample(rng));
            }
        };
        let fan_in = cfg.input_dim();
        uniform(&mut p.in_w, fan_in);
        uniform(&mut p.in_b, fan_in);
        uniform(&mut p.time_w, 2 * cfg.time_freqs);
        uniform(&mut p.time_b, 2 * cfg.time_freqs);
        for l in 0..TRUNK_DEPTH {
            let fan_in = p.trunk_w[l].dims[0];
            uniform(&mut p.trunk_w[l], fan_in);
            uniform(&mut p.trunk_b[l], fan_in);
        }
        if let Some(c) = &mut p.cond_embed {
            for v in &mut c.data {
                let x: f64 = StandardNormal.sample(rng);
                *v = T::from_f64(x);
            }
        }
        for (b, props) in p.head_cat_b.iter_mut().zip(proportions) {
            for (v, &pc) in b.data.iter_mut().zip(props) {
                *v = T::from_f64(libm::log(pc));
            }
        }
        Ok(p)
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill_zero();
        z
    }

    pub fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    /// Tensors in canonical order.
    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut v: Vec<&Tensor<T>> = self.cat_embed.iter().collect();
        v.push(&self.cat_bias);
        v.push(&self.in_w);
        v.push(&self.in_b);
        v.push(&self.time_w);
        v.push(&self.time_b);
        if let Some(c) = &self.cond_embed {
            v.push(c);
        }
        for (w, b) in self.trunk_w.iter().zip(&self.trunk_b) {
            v.push(w);
            v.push(b);
        }
        v.push(&self.head_cont_w);
        v.push(&self.head_cont_b);
        for (w, b) in self.head_cat_w.iter().zip(&self.head_cat_b) {
            v.push(w);
            v.push(b);
        }
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v: Vec<&mut Tensor<T>> = self.cat_embed.iter_mut().collect();
        v.push(&mut self.cat_bias);
        v.push(&mut self.in_w);
        v.push(&mut self.in_b);
        v.push(&mut self.time_w);
        v.push(&mut self.time_b);
        if let Some(c) = &mut self.cond_embed {
            v.push(c);
        }
        for (w, b) in self.trunk_w.iter_mut().zip(self.trunk_b.iter_mut()) {
            v.push(w);
            v.push(b);
        }
        v.push(&mut self.head_cont_w);
        v.push(&mut self.head_cont_b);
        for (w, b) in self.head_cat_w.iter_mut().zip(self.head_cat_b.iter_mut()) {
            v.push(w);
            v.push(b);
        }
        v
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Rebuild from tensors in canonical order, checking names and shapes.
    pub fn from_tensors(cfg: &NetworkConfig, tensors: Vec<Tensor<T>>) -> Result<Self> {
        let mut p = Self::zeros(cfg);
        let slots = p.tensors_mut();
        if slots.len() != tensors.len() {
            return Err(Error::Shape(format!("expected {} tensors, got {}", slots.len(), tensors.len())));
        }
        for (slot, t) in slots.into_iter().zip(tensors) {
            if slot.name != t.name || slot.dims != t.dims || t.data.len() != slot.data.len() {
                return Err(Error::Shape(format!(
                    "tensor {:?} {:?} does not match expected {:?} {:?}",
                    t.name, t.dims, slot.name, slot.dims
                )));
            }
            slot.data = t.data;
        }
        Ok(p)
    }

    pub fn cast<U: Real>(&self) -> Parameters<U> {
        Parameters {
            cat_embed: self.cat_embed.iter().map(Tensor::cast).collect(),
            cat_bias: self.cat_bias.cast(),
            in_w: self.in_w.cast(),
            in_b: self.in_b.cast(),
            time_w: self.time_w.cast(),
            time_b: self.time_b.cast(),
            cond_embed: self.cond_embed.as_ref().map(Tensor::cast),
            trunk_w: self.trunk_w.iter().map(Tensor::cast).collect(),
            trunk_b: self.trunk_b.iter().map(Tensor::cast).collect(),
            head_cont_w: self.head_cont_w.cast(),
            head_cont_b: self.head_cont_b.cast(),
            head_cat_w: self.head_cat_w.iter().map(Tensor::cast).collect(),
            head_cat_b: self.head_cat_b.iter().map(Tensor::cast).collect(),
        }
    }

    /// Project every embedding row back onto the unit sphere.
    pub fn normalize_embeddings(&mut self) {
        for e in &mut self.cat_embed {
            let d = e.dims[1];
            for row in e.data.chunks_exact_mut(d) {
                let norm = libm::sqrt(row.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>());
                if norm > 0.0 {
                    for v in row.iter_mut() {
                        *v = T::from_f64(v.as_f64() / norm);
                    }
                }
            }
        }
    }

    /// Clean embedding of class `code` of categorical feature `j`: the
    /// unit-norm row plus the feature bias.
    pub fn embedding(&self, j: usize, code: usize, out: &mut [f64]) -> Result<()> {
        let e = self.cat_embed.get(j).ok_or_else(|| Error::Shape(format!("no categorical feature {j}")))?;
        let (c, d) = (e.dims[0], e.dims[1]);
        if code >= c {
            return Err(Error::Shape(format!("code {code} out of range for feature {j} with {c} classes")));
        }
        let row = &e.data[code * d..(code + 1) * d];
        let bias = &self.cat_bias.data[j * d..(j + 1) * d];
        let norm = libm::sqrt(row.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>());
        let norm = if norm > 0.0 { norm } else { 1.0 };
        for ((o, r), b) in out.iter_mut().zip(row).zip(bias) {
            *o = r.as_f64() / norm + b.as_f64();
        }
        Ok(())
    }
}
