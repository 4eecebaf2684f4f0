use serde::{Deserialize, Serialize};

use super::{Gradients, NetworkParams, NnError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self { learning_rate, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Adam moment estimates for one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &NetworkParams, config: AdamConfig) -> Self {
        let zeros = || params.tensors().iter().map(|t| Tensor::zeros(t.shape().to_vec())).collect();
        Self { config, first: zeros(), second: zeros(), step: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.second
    }

    /// One bias-corrected Adam update, applied to `params` in place.
    ///
    /// Non-finite gradients are rejected before anything is modified.
    pub fn step(&mut self, params: &mut NetworkParams, grads: &Gradients) -> Result<(), NnError> {
        if grads.tensors.len() != self.first.len() {
            return Err(NnError::Shape("gradient layout does not match optimizer state".into()));
        }
        if !grads.is_finite() {
            return Err(NnError::NonFinite("gradient"));
        }
        let AdamConfig { learning_rate, beta1, beta2, epsilon } = self.config;
        self.step += 1;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, g), m), v) in
            params.tensors_mut().iter_mut().zip(&grads.tensors).zip(&mut self.first).zip(&mut self.second)
        {
            for (((pi, gi), mi), vi) in
                p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut())
            {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *pi -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}
