use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::kernels::{add_bias, col_sum, gemm_nn, gemm_nt, gemm_tn};
use super::params::{Gradients, Parameters};
use super::NetworkConfig;
use crate::error::{Error, Result};
use crate::math::Real;

/// Raw network outputs for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Outputs<T> {
    pub batch: usize,
    /// `B × K_cont`
    pub cont: Vec<T>,
    /// `B × ΣC_j`, features concatenated in model order.
    pub logits: Vec<T>,
}

/// Activations retained by a recorded forward pass. Produced only by
/// [`Network::forward_recorded`] and consumed by [`Network::backward`].
#[derive(Debug, Clone)]
pub struct ForwardTape<T> {
    batch: usize,
    inputs: Vec<T>,
    time_feats: Vec<T>,
    cond: Option<Vec<u32>>,
    /// `acts[0]` is the summed projection, `acts[l + 1]` the output of trunk layer `l`.
    acts: Vec<Vec<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    pub config: NetworkConfig,
    pub params: Parameters<T>,
}

impl<T: Real> Network<T> {
    pub fn new(config: NetworkConfig, params: Parameters<T>) -> Result<Self> {
        config.validate()?;
        let expected = Parameters::<T>::zeros(&config);
        for (a, b) in params.tensors().iter().zip(expected.tensors()) {
            if a.dims != b.dims {
                return Err(Error::Shape(format!("tensor {} has dims {:?}, expected {:?}", a.name, a.dims, b.dims)));
            }
        }
        if params.tensors().len() != expected.tensors().len() {
            return Err(Error::Shape("parameter layout does not match the network config".into()));
        }
        Ok(Self { config, params })
    }

    /// Sinusoidal time features for each `t`: `[sin(s·t·f_k)…, cos(s·t·f_k)…]`.
    pub fn time_features(&self, times: &[f64]) -> Vec<T> {
        let freqs = self.config.time_frequencies();
        let nf = freqs.len();
        let mut out = vec![T::zero(); times.len() * 2 * nf];
        for (row, &t) in out.chunks_exact_mut(2 * nf).zip(times) {
            let st = self.config.time_scale * t;
            for (k, &f) in freqs.iter().enumerate() {
                let a = st * f;
                row[k] = T::from_f64(libm::sin(a));
                row[nf + k] = T::from_f64(libm::cos(a));
            }
        }
        out
    }

    /// Projected time embedding (before summation), `B × proj_dim`.
    pub fn time_embedding(&self, times: &[f64]) -> Vec<T> {
        let p = self.config.proj_dim;
        let tf = self.time_features(times);
        let mut out = vec![T::zero(); times.len() * p];
        gemm_nn(&tf, &self.params.time_w.data, &mut out, times.len(), 2 * self.config.time_freqs, p);
        add_bias(&mut out, &self.params.time_b.data);
        out
    }

    fn check_inputs(&self, inputs: &[T], times: &[f64], cond: Option<&[u32]>) -> Result<usize> {
        let b = times.len();
        let in_dim = self.config.input_dim();
        if inputs.len() != b * in_dim {
            return Err(Error::Shape(format!(
                "input has {} values, expected {} rows × {} columns",
                inputs.len(),
                b,
                in_dim
            )));
        }
        match (self.config.cond_classes, cond) {
            (Some(c), Some(y)) => {
                if y.len() != b {
                    return Err(Error::Shape("conditioning labels do not match the batch size".into()));
                }
                if let Some(&bad) = y.iter().find(|&&v| v as usize >= c) {
                    return Err(Error::Shape(format!("conditioning class {bad} out of range ({c} classes)")));
                }
            }
            (None, None) => {}
            (Some(_), None) => return Err(Error::Shape("network is conditional but no labels were given".into())),
            (None, Some(_)) => return Err(Error::Shape("network is unconditional but labels were given".into())),
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::Domain { what: "t", value: times.iter().copied().find(|t| !t.is_finite()).unwrap_or(f64::NAN) });
        }
        Ok(b)
    }

    fn run(&self, inputs: &[T], times: &[f64], cond: Option<&[u32]>, record: bool) -> Result<(Outputs<T>, Option<ForwardTape<T>>)> {
        let b = self.check_inputs(inputs, times, cond)?;
        let cfg = &self.config;
        let p = cfg.proj_dim;
        let w = cfg.trunk_width;
        let tdim = 2 * cfg.time_freqs;
        let prm = &self.params;

        let mut h0 = vec![T::zero(); b * p];
        gemm_nn(inputs, &prm.in_w.data, &mut h0, b, cfg.input_dim(), p);
        add_bias(&mut h0, &prm.in_b.data);

        let shared_t = times.windows(2).all(|x| x[0] == x[1]);
        let time_feats = if shared_t && !record && b > 0 {
            let emb = self.time_embedding(&times[..1]);
            for row in h0.chunks_exact_mut(p) {
                for (v, &e) in row.iter_mut().zip(&emb) {
                    *v += e;
                }
            }
            Vec::new()
        } else {
            let tf = self.time_features(times);
            gemm_nn(&tf, &prm.time_w.data, &mut h0, b, tdim, p);
            add_bias(&mut h0, &prm.time_b.data);
            tf
        };
        if let (Some(emb), Some(y)) = (&prm.cond_embed, cond) {
            for (row, &c) in h0.chunks_exact_mut(p).zip(y) {
                let e = &emb.data[c as usize * p..(c as usize + 1) * p];
                for (v, &ev) in row.iter_mut().zip(e) {
                    *v += ev;
                }
            }
        }

        let mut acts: Vec<Vec<T>> = Vec::with_capacity(prm.trunk_w.len() + 1);
        let mut h = h0;
        let mut fan_in = p;
        for (wt, bt) in prm.trunk_w.iter().zip(&prm.trunk_b) {
            let mut z = vec![T::zero(); b * w];
            gemm_nn(&h, &wt.data, &mut z, b, fan_in, w);
            add_bias(&mut z, &bt.data);
            for v in &mut z {
                if *v < T::zero() {
                    *v = T::zero();
                }
            }
            if record {
                acts.push(core::mem::replace(&mut h, z));
            } else {
                h = z;
            }
            fan_in = w;
        }

        let k = cfg.n_cont;
        let mut cont = vec![T::zero(); b * k];
        gemm_nn(&h, &prm.head_cont_w.data, &mut cont, b, w, k);
        add_bias(&mut cont, &prm.head_cont_b.data);

        let offsets = cfg.logit_offsets();
        let total = cfg.total_classes();
        let mut logits = vec![T::zero(); b * total];
        for (j, (hw, hb)) in prm.head_cat_w.iter().zip(&prm.head_cat_b).enumerate() {
            let c = cfg.cat_cardinalities[j];
            let mut part = vec![T::zero(); b * c];
            gemm_nn(&h, &hw.data, &mut part, b, w, c);
            add_bias(&mut part, &hb.data);
            for (dst, src) in logits.chunks_exact_mut(total).zip(part.chunks_exact(c)) {
                dst[offsets[j]..offsets[j + 1]].copy_from_slice(src);
            }
        }

        let tape = if record {
            acts.push(h);
            Some(ForwardTape {
                batch: b,
                inputs: inputs.to_vec(),
                time_feats,
                cond: cond.map(<[u32]>::to_vec),
                acts,
            })
        } else {
            None
        };
        Ok((Outputs { batch: b, cont, logits }, tape))
    }

    /// Forward pass. `inputs` is `B × input_dim`: the (already input-scaled)
    /// continuous values followed by the categorical embedding states.
    pub fn forward(&self, inputs: &[T], times: &[f64], cond: Option<&[u32]>) -> Result<Outputs<T>> {
        Ok(self.run(inputs, times, cond, false)?.0)
    }

    /// Forward pass that keeps the activations needed by [`Network::backward`].
    pub fn forward_recorded(&self, inputs: &[T], times: &[f64], cond: Option<&[u32]>) -> Result<(Outputs<T>, ForwardTape<T>)> {
        let (out, tape) = self.run(inputs, times, cond, true)?;
        Ok((out, tape.expect("recording was requested")))
    }

    /// Reverse pass given the loss gradients w.r.t. both output blocks.
    /// Accumulates parameter gradients into `grads` and returns the
    /// gradient w.r.t. the inputs.
    pub fn backward(&self, tape: &ForwardTape<T>, d_cont: &[T], d_logits: &[T], grads: &mut Gradients<T>) -> Result<Vec<T>> {
        let cfg = &self.config;
        let b = tape.batch;
        let p = cfg.proj_dim;
        let w = cfg.trunk_width;
        let k = cfg.n_cont;
        let total = cfg.total_classes();
        if d_cont.len() != b * k || d_logits.len() != b * total {
            return Err(Error::Shape("output gradients do not match the recorded batch".into()));
        }
        let prm = &self.params;
        let depth = prm.trunk_w.len();
        let h_last = &tape.acts[depth];

        let mut dh = vec![T::zero(); b * w];
        gemm_tn(h_last, d_cont, &mut grads.head_cont_w.data, b, w, k);
        col_sum(d_cont, &mut grads.head_cont_b.data);
        gemm_nt(d_cont, &prm.head_cont_w.data, &mut dh, b, w, k);

        let offsets = cfg.logit_offsets();
        for j in 0..cfg.n_cat() {
            let c = cfg.cat_cardinalities[j];
            let mut part = Vec::with_capacity(b * c);
            for row in d_logits.chunks_exact(total) {
                part.extend_from_slice(&row[offsets[j]..offsets[j + 1]]);
            }
            gemm_tn(h_last, &part, &mut grads.head_cat_w[j].data, b, w, c);
            col_sum(&part, &mut grads.head_cat_b[j].data);
            gemm_nt(&part, &prm.head_cat_w[j].data, &mut dh, b, w, c);
        }

        for l in (0..depth).rev() {
            let out = &tape.acts[l + 1];
            for (d, &o) in dh.iter_mut().zip(out) {
                if o <= T::zero() {
                    *d = T::zero();
                }
            }
            let input = &tape.acts[l];
            let fan_in = if l == 0 { p } else { w };
            gemm_tn(input, &dh, &mut grads.trunk_w[l].data, b, fan_in, w);
            col_sum(&dh, &mut grads.trunk_b[l].data);
            let mut prev = vec![T::zero(); b * fan_in];
            gemm_nt(&dh, &prm.trunk_w[l].data, &mut prev, b, fan_in, w);
            dh = prev;
        }

        let in_dim = cfg.input_dim();
        gemm_tn(&tape.inputs, &dh, &mut grads.in_w.data, b, in_dim, p);
        col_sum(&dh, &mut grads.in_b.data);
        let tdim = 2 * cfg.time_freqs;
        gemm_tn(&tape.time_feats, &dh, &mut grads.time_w.data, b, tdim, p);
        col_sum(&dh, &mut grads.time_b.data);
        if let (Some(g), Some(y)) = (&mut grads.cond_embed, &tape.cond) {
            for (row, &c) in dh.chunks_exact(p).zip(y) {
                let dst = &mut g.data[c as usize * p..(c as usize + 1) * p];
                for (d, &v) in dst.iter_mut().zip(row) {
                    *d += v;
                }
            }
        }
        let mut d_inputs = vec![T::zero(); b * in_dim];
        gemm_nt(&dh, &prm.in_w.data, &mut d_inputs, b, in_dim, p);
        Ok(d_inputs)
    }
}
