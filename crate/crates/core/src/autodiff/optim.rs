//! SGD and bias-corrected Adam over a [`ParamStore`].

use std::collections::BTreeMap;

use super::graph::Grads;
use super::tensor::ParamStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
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

#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One Adam update. Parameters without a gradient entry are left alone.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Grads) -> Result<()> {
        for (name, g) in grads.iter() {
            let t = params
                .get(name)
                .ok_or_else(|| Error::MissingParam(name.to_string()))?;
            if t.len() != g.len() {
                return Err(Error::ShapeMismatch {
                    op: "adam_step",
                    detail: format!("`{name}` has {} values, gradient has {}", t.len(), g.len()),
                });
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (name, g) in grads.iter() {
            let t = params.get_mut(name).expect("checked above");
            let (m, v) = self
                .moments
                .entry(name.to_string())
                .or_insert_with(|| (vec![0.0; g.len()], vec![0.0; g.len()]));
            for (k, theta) in t.data_mut().iter_mut().enumerate() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                *theta -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Sgd {
    pub lr: f64,
}

impl Sgd {
    pub fn step(&self, params: &mut ParamStore, grads: &Grads) -> Result<()> {
        for (name, g) in grads.iter() {
            let t = params
                .get_mut(name)
                .ok_or_else(|| Error::MissingParam(name.to_string()))?;
            if t.len() != g.len() {
                return Err(Error::ShapeMismatch {
                    op: "sgd_step",
                    detail: format!("`{name}` has {} values, gradient has {}", t.len(), g.len()),
                });
            }
            t.data_mut().iter_mut().zip(g).for_each(|(p, d)| *p -= self.lr * d);
        }
        Ok(())
    }
}
