use serde::{Deserialize, Serialize};

use crate::error::{EdlError, Result};
use crate::nn::ParamBlock;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub clamp_bound: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clamp_bound: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub name: String,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

/// Bias-corrected Adam with per-coordinate gradient clamping. Moments are
/// keyed by block name and created lazily on the first update.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step_count: u64,
    pub moments: Vec<Moments>,
}

/// Clamps each gradient coordinate into `[-bound, bound]`.
pub fn clamp_gradient(block: &mut ParamBlock, bound: f64) {
    for g in &mut block.grad {
        *g = g.clamp(-bound, bound);
    }
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        AdamState {
            config,
            step_count: 0,
            moments: Vec::new(),
        }
    }

    fn moments_for(&mut self, block: &ParamBlock) -> Result<&mut Moments> {
        let idx = match self.moments.iter().position(|m| m.name == block.name) {
            Some(i) => i,
            None => {
                self.moments.push(Moments {
                    name: block.name.clone(),
                    m: vec![0.0; block.len()],
                    v: vec![0.0; block.len()],
                });
                self.moments.len() - 1
            }
        };
        let m = &mut self.moments[idx];
        if m.m.len() != block.len() {
            return Err(EdlError::DimensionMismatch {
                left: m.m.len(),
                right: block.len(),
            });
        }
        Ok(m)
    }

    /// Starts a new optimizer step; bias correction uses the new count.
    pub fn begin_step(&mut self) {
        self.step_count += 1;
    }

    /// Clamps, applies one update with the current step count, and zeroes
    /// the gradient. Fails without touching the block if any gradient
    /// coordinate is non-finite.
    pub fn update(&mut self, block: &mut ParamBlock) -> Result<()> {
        block.check_finite()?;
        if self.step_count == 0 {
            return Err(EdlError::Contract("update called before begin_step".into()));
        }
        let c = self.config.clone();
        clamp_gradient(block, c.clamp_bound);
        let t = self.step_count as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let mom = self.moments_for(block)?;
        for i in 0..block.values.len() {
            let g = block.grad[i];
            mom.m[i] = c.beta1 * mom.m[i] + (1.0 - c.beta1) * g;
            mom.v[i] = c.beta2 * mom.v[i] + (1.0 - c.beta2) * g * g;
            let m_hat = mom.m[i] / bc1;
            let v_hat = mom.v[i] / bc2;
            block.values[i] -= c.lr * m_hat / (v_hat.sqrt() + c.epsilon);
        }
        block.zero_grad();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(values: Vec<f64>, grad: Vec<f64>) -> ParamBlock {
        let mut b = ParamBlock::zeros("w", &[values.len()]);
        b.values = values;
        b.grad = grad;
        b
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut adam = AdamState::new(AdamConfig::default());
        let mut b = block(vec![1.0, 1.0, 1.0], vec![0.3, -2.0, 4.0]);
        adam.begin_step();
        adam.update(&mut b).unwrap();
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        for (v, g) in b.values.iter().zip([0.3f64, -2.0, 4.0]) {
            let expected = 1.0 - 1e-3 * g / (g.abs() + 1e-8);
            assert!((v - expected).abs() < 1e-15);
        }
        assert!(b.grad.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn zero_gradient_keeps_values_and_counts_step() {
        let mut adam = AdamState::new(AdamConfig::default());
        let mut b = block(vec![0.5, -0.5], vec![0.0, 0.0]);
        adam.begin_step();
        adam.update(&mut b).unwrap();
        assert_eq!(b.values, vec![0.5, -0.5]);
        assert_eq!(adam.step_count, 1);
    }

    #[test]
    fn clamps_before_update() {
        let mut b = block(vec![0.0; 3], vec![7.3, -9.0, 1.0]);
        clamp_gradient(&mut b, 5.0);
        assert_eq!(b.grad, vec![5.0, -5.0, 1.0]);
    }

    #[test]
    fn non_finite_gradient_names_block() {
        let mut adam = AdamState::new(AdamConfig::default());
        let mut b = block(vec![0.0], vec![f64::NAN]);
        adam.begin_step();
        let err = adam.update(&mut b).unwrap_err();
        assert!(err.to_string().contains("`w`"));
        assert_eq!(b.values, vec![0.0]);
    }

    #[test]
    fn identical_inputs_give_identical_updates() {
        let run = || {
            let mut adam = AdamState::new(AdamConfig::default());
            let mut b = block(vec![0.1, 0.2], vec![0.0; 2]);
            for k in 0..5 {
                b.grad = vec![0.1 * k as f64, -0.3];
                adam.begin_step();
                adam.update(&mut b).unwrap();
            }
            b.values
        };
        assert_eq!(run(), run());
    }
}
