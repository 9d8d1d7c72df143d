use serde::{Deserialize, Serialize};

use super::net::{DenseNet, Gradients};
use crate::error::{Error, Result};

const MOMENT_FLOOR: f64 = 1e-200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Coefficient of the squared-weight penalty added to the loss.
    pub l2: f64,
    /// Rescale gradients whose norm exceeds this value.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            l2: 1e-4,
            clip_norm: None,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate < 1.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.l2 >= 0.0
            && self.clip_norm.is_none_or(|c| c > 0.0);
        if !ok {
            return Err(Error::Config(format!("invalid optimizer settings {self:?}")));
        }
        Ok(())
    }
}

/// Adam state for one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(net: &DenseNet, config: AdamConfig) -> Self {
        let n = net.num_params();
        Self {
            config,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    /// Applies one bias-corrected update to `net`.
    pub fn update(&mut self, net: &mut DenseNet, grads: &mut Gradients) {
        if let Some(max) = self.config.clip_norm {
            let norm = grads.norm();
            if norm > max {
                grads.scale(max / norm);
            }
        }
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let mut k = 0;
        for (li, layer) in net.layers.iter_mut().enumerate() {
            let params = layer.weights.iter_mut().chain(layer.biases.iter_mut());
            let g = grads.weights[li].iter().chain(&grads.biases[li]);
            for (p, &g) in params.zip(g) {
                let m = &mut self.m[k];
                let v = &mut self.v[k];
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                // Moments of parameters whose gradient stays zero decay into
                // subnormals, which are very slow on most CPUs.
                if m.abs() < MOMENT_FLOOR {
                    *m = 0.0;
                }
                if *v < MOMENT_FLOOR {
                    *v = 0.0;
                }
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
                k += 1;
            }
        }
    }
}
