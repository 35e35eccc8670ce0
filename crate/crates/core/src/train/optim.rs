use serde::{Deserialize, Serialize};

use crate::model::ModelParams;

use super::grad::{zeros_like, Gradients};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moments.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    pub m: Gradients,
    pub v: Gradients,
    pub t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ModelParams) -> Self {
        Adam {
            config,
            m: zeros_like(params),
            v: zeros_like(params),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &Gradients, lr: f64) {
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        let p = params.slices_mut();
        let m = self.m.slices_mut();
        let v = self.v.slices_mut();
        let g = grads.slices();
        for (((p, m), v), g) in p.into_iter().zip(m).zip(v).zip(g) {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
