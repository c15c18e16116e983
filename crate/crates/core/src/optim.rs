use std::collections::BTreeMap;

use crate::autodiff::{Gradients, ParameterStore, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam with per-parameter moment buffers.
#[derive(Clone, Debug)]
pub struct Adam {
    cfg: AdamConfig,
    step: u64,
    moments: BTreeMap<String, (Tensor, Tensor)>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Result<Self> {
        let ok = cfg.lr >= 0.0
            && cfg.lr.is_finite()
            && (0.0..1.0).contains(&cfg.beta1)
            && (0.0..1.0).contains(&cfg.beta2)
            && cfg.eps > 0.0;
        if !ok {
            return Err(Error::Config(format!("invalid optimizer settings {cfg:?}")));
        }
        Ok(Adam {
            cfg,
            step: 0,
            moments: BTreeMap::new(),
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, store: &mut ParameterStore, grads: &Gradients) -> Result<()> {
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.step.min(i32::MAX as u64) as i32);
        let c2 = 1.0 - beta2.powi(self.step.min(i32::MAX as u64) as i32);
        for (name, g) in grads.iter() {
            let p = store.value_mut(name)?;
            if p.shape() != g.shape() {
                return Err(Error::ShapeMismatch {
                    op: "adam",
                    shapes: vec![p.shape().to_vec(), g.shape().to_vec()],
                });
            }
            let (m, v) = self
                .moments
                .entry(name.to_string())
                .or_insert_with(|| (Tensor::zeros(g.rows(), g.cols()), Tensor::zeros(g.rows(), g.cols())));
            for (((pi, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *pi -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Rescales `grads` so their global norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{backward, Graph, Partition};

    fn quadratic_store() -> ParameterStore {
        let mut s = ParameterStore::new();
        s.insert("x", Partition::Theta, Tensor::row(vec![3.0, -2.0])).unwrap();
        s
    }

    fn grads(s: &ParameterStore) -> Gradients {
        let mut g = Graph::new(s);
        let x = g.param("x").unwrap();
        let xx = g.mul(x, x).unwrap();
        let l = g.sum(xx);
        backward(&g, l, s).unwrap()
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_bitwise_unchanged() {
        let mut s = quadratic_store();
        let before = s.clone();
        let mut opt = Adam::new(AdamConfig {
            lr: 0.0,
            ..Default::default()
        })
        .unwrap();
        let g = grads(&s);
        opt.update(&mut s, &g).unwrap();
        assert_eq!(s.value("x").unwrap().data(), before.value("x").unwrap().data());
    }

    #[test]
    fn first_step_moves_each_coordinate_by_lr() {
        let mut s = quadratic_store();
        let mut opt = Adam::new(AdamConfig::default()).unwrap();
        let g = grads(&s);
        opt.update(&mut s, &g).unwrap();
        let x = s.value("x").unwrap().data();
        assert!((x[0] - (3.0 - 1e-3)).abs() < 1e-9);
        assert!((x[1] - (-2.0 + 1e-3)).abs() < 1e-9);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut s = quadratic_store();
        let mut opt = Adam::new(AdamConfig {
            lr: 0.1,
            ..Default::default()
        })
        .unwrap();
        for _ in 0..500 {
            let g = grads(&s);
            opt.update(&mut s, &g).unwrap();
        }
        assert!(s.value("x").unwrap().squared_norm() < 1e-4);
    }

    #[test]
    fn clipping_caps_the_global_norm() {
        let s = quadratic_store();
        let mut g = grads(&s);
        let before = clip_global_norm(&mut g, 1.0);
        assert!((before - (36.0f64 + 16.0).sqrt()).abs() < 1e-12);
        assert!((g.global_norm() - 1.0).abs() < 1e-12);
        let unchanged = clip_global_norm(&mut g, 5.0);
        assert!((unchanged - 1.0).abs() < 1e-12);
    }
}
