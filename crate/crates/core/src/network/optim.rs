use super::params::{Gradients, Parameters};
use crate::math::Real;

/// Adam with bias correction; moments share the parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Parameters<T>,
    pub v: Parameters<T>,
}

impl<T: Real> Adam<T> {
    pub fn new(params: &Parameters<T>) -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: params.zeros_like(), v: params.zeros_like() }
    }

    /// One update with learning rate `lr`. A zero `lr` leaves parameters untouched
    /// but still advances the moments.
    pub fn step(&mut self, params: &mut Parameters<T>, grads: &Gradients<T>, lr: f64) {
        self.t += 1;
        let b1 = self.beta1;
        let b2 = self.beta2;
        let bc1 = 1.0 - libm::pow(b1, self.t as f64);
        let bc2 = 1.0 - libm::pow(b2, self.t as f64);
        let step = T::from_f64(lr / bc1);
        let inv_bc2 = T::from_f64(1.0 / bc2);
        let eps = T::from_f64(self.eps);
        let (b1t, b2t) = (T::from_f64(b1), T::from_f64(b2));
        let (o1, o2) = (T::from_f64(1.0 - b1), T::from_f64(1.0 - b2));
        let apply = lr != 0.0;
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            for (((pv, &gv), mv), vv) in p.data.iter_mut().zip(&g.data).zip(m.data.iter_mut()).zip(v.data.iter_mut()) {
                *mv = b1t * *mv + o1 * gv;
                *vv = b2t * *vv + o2 * gv * gv;
                if apply {
                    *pv -= step * *mv / ((*vv * inv_bc2).sqrt() + eps);
                }
            }
        }
    }
}

/// `shadow ← decay·shadow + (1 − decay)·live`, elementwise, evaluated as
/// `shadow + (1 − decay)·(live − shadow)` so equal inputs stay fixed.
pub fn ema_update<T: Real>(shadow: &mut Parameters<T>, live: &Parameters<T>, decay: f64) {
    let o = T::from_f64(1.0 - decay);
    for (s, l) in shadow.tensors_mut().into_iter().zip(live.tensors()) {
        for (sv, &lv) in s.data.iter_mut().zip(&l.data) {
            *sv += o * (lv - *sv);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::NetworkConfig;

    fn tiny() -> Parameters<f64> {
        let mut cfg = NetworkConfig::new(1, alloc::vec![2]);
        cfg.proj_dim = 3;
        cfg.trunk_width = 4;
        cfg.time_freqs = 2;
        cfg.embed_dim = 2;
        Parameters::zeros(&cfg)
    }

    #[test]
    fn ema_examples() {
        let mut shadow = tiny();
        let mut live = tiny();
        for t in live.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v = 1.0);
        }
        ema_update(&mut shadow, &live, 0.999);
        assert!(shadow.tensors().iter().all(|t| t.data.iter().all(|&v| (v - 0.001).abs() < 1e-15)));
        for _ in 1..50 {
            ema_update(&mut shadow, &live, 0.999);
        }
        let expected = 1.0 - libm::pow(0.999, 50.0);
        assert!(shadow.in_w.data.iter().all(|&v| (v - expected).abs() < 1e-12));

        let mut same = live.clone();
        ema_update(&mut same, &live, 0.999);
        assert_eq!(same, live);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = tiny();
        let mut g = tiny();
        g.in_b.data[0] = 3.0;
        g.in_b.data[1] = -0.5;
        let mut opt = Adam::new(&p);
        opt.step(&mut p, &g, 0.01);
        assert!((p.in_b.data[0] + 0.01).abs() < 1e-8);
        assert!((p.in_b.data[1] - 0.01).abs() < 1e-8);
        assert_eq!(p.in_b.data[2], 0.0);
    }

    #[test]
    fn adam_zero_lr_is_noop() {
        let mut p = tiny();
        p.in_w.data[0] = 0.7;
        let before = p.clone();
        let mut g = tiny();
        g.in_w.data[0] = 1.0;
        let mut opt = Adam::new(&p);
        opt.step(&mut p, &g, 0.0);
        assert_eq!(p, before);
    }
}
