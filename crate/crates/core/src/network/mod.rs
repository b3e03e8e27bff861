//! The denoising score network.
//!
//! Noisy continuous scalars and noisy categorical embeddings are projected
//! to a common width and summed with a sinusoidal time embedding (and an
//! optional target embedding). A five-layer ReLU MLP follows, then one
//! linear head for the continuous features and one per categorical feature.

mod kernels;
mod model;
mod optim;
mod params;

pub use model::{ForwardTape, Network, Outputs};
pub use optim::{ema_update, Adam};
pub use params::{Gradients, Parameters, Tensor};

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of fully connected layers in the trunk.
pub const TRUNK_DEPTH: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub n_cont: usize,
    pub cat_cardinalities: Vec<usize>,
    pub embed_dim: usize,
    /// Width every input is projected to before summation.
    pub proj_dim: usize,
    pub trunk_width: usize,
    /// Number of sinusoid frequencies; the raw time embedding has twice as many dims.
    pub time_freqs: usize,
    pub time_scale: f64,
    /// Std of the normal draw that initializes category embeddings.
    pub sigma_init: f64,
    /// Class count of the conditioning target, if any.
    pub cond_classes: Option<usize>,
}

impl NetworkConfig {
    pub fn new(n_cont: usize, cat_cardinalities: Vec<usize>) -> Self {
        Self {
            n_cont,
            cat_cardinalities,
            embed_dim: 16,
            proj_dim: 256,
            trunk_width: 796,
            time_freqs: 64,
            time_scale: 1000.0,
            sigma_init: 0.001,
            cond_classes: None,
        }
    }

    pub fn n_cat(&self) -> usize {
        self.cat_cardinalities.len()
    }

    /// Width of the flattened network input.
    pub fn input_dim(&self) -> usize {
        self.n_cont + self.n_cat() * self.embed_dim
    }

    pub fn total_classes(&self) -> usize {
        self.cat_cardinalities.iter().sum()
    }

    /// Offsets of each categorical feature inside the concatenated logits.
    pub fn logit_offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.n_cat() + 1);
        let mut acc = 0;
        off.push(0);
        for &c in &self.cat_cardinalities {
            acc += c;
            off.push(acc);
        }
        off
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_cont + self.n_cat() == 0 {
            return Err(Error::Config("network needs at least one feature".into()));
        }
        if self.embed_dim == 0 || self.proj_dim == 0 || self.trunk_width == 0 || self.time_freqs == 0 {
            return Err(Error::Config("network widths must be positive".into()));
        }
        if self.cat_cardinalities.iter().any(|&c| c < 2) {
            return Err(Error::Config("categorical features need at least two classes".into()));
        }
        if matches!(self.cond_classes, Some(c) if c < 2) {
            return Err(Error::Config("conditioning target needs at least two classes".into()));
        }
        if !(self.time_scale > 0.0 && self.sigma_init > 0.0) {
            return Err(Error::Config("time_scale and sigma_init must be positive".into()));
        }
        Ok(())
    }

    /// Sinusoid frequencies, geometric from 1 down to 1/1000.
    pub fn time_frequencies(&self) -> Vec<f64> {
        let n = self.time_freqs;
        (0..n)
            .map(|k| if n == 1 { 1.0 } else { libm::pow(1000.0, -(k as f64) / (n - 1) as f64) })
            .collect()
    }
}
