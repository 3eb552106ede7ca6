use serde::{Deserialize, Serialize};

use super::NnError;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with bias correction. Moments are allocated on the first step.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub step: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, m: Vec::new(), v: Vec::new(), step: 0 }
    }

    pub fn step(&mut self, params: &mut [&mut [T]], grads: &[&[T]]) -> Result<(), NnError> {
        if params.len() != grads.len() {
            return Err(NnError::ParamMismatch(format!("{} parameter blocks, {} gradient blocks", params.len(), grads.len())));
        }
        if let Some(i) = (0..params.len()).find(|&i| params[i].len() != grads[i].len()) {
            return Err(NnError::ParamMismatch(format!("block {i}: {} params, {} grads", params[i].len(), grads[i].len())));
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
            self.v = self.m.clone();
        } else if self.m.len() != params.len() || self.m.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len()) {
            return Err(NnError::ParamMismatch("parameter layout changed between steps".into()));
        }

        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let lr_t = T::lit(c.lr * (1.0 - c.beta2.powi(t)).sqrt() / (1.0 - c.beta1.powi(t)));
        let eps_t = T::lit(c.eps * (1.0 - c.beta2.powi(t)).sqrt());
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (a1, a2) = (T::one() - b1, T::one() - b2);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + a1 * gi;
                v[i] = b2 * v[i] + a2 * gi * gi;
                p[i] -= lr_t * m[i] / (v[i].sqrt() + eps_t);
            }
        }
        Ok(())
    }
}
