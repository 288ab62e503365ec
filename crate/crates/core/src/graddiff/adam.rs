//! Adaptive-moment optimizer with global gradient-norm clipping.

use crate::error::{Error, Result};
use crate::graddiff::params::ParameterStore;
use crate::graddiff::real::Real;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub clip_norm: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 10.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerState<F> {
    pub config: OptimizerConfig,
    pub step: u64,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
}

impl<F: Real> OptimizerState<F> {
    pub fn new(params: &ParameterStore<F>, config: OptimizerConfig) -> Self {
        let m = params.iter().map(|e| vec![F::zero(); e.values.len()]).collect();
        let v = params.iter().map(|e| vec![F::zero(); e.values.len()]).collect();
        OptimizerState { config, step: 0, m, v }
    }

    /// Moment vectors in parameter declaration order, for persistence.
    pub fn moments(&self) -> (&[Vec<F>], &[Vec<F>]) {
        (&self.m, &self.v)
    }

    pub fn restore(
        params: &ParameterStore<F>,
        config: OptimizerConfig,
        step: u64,
        m: Vec<Vec<F>>,
        v: Vec<Vec<F>>,
    ) -> Result<Self> {
        for (e, (mm, vv)) in params.iter().zip(m.iter().zip(&v)) {
            if mm.len() != e.values.len() || vv.len() != e.values.len() {
                return Err(Error::Checkpoint(format!(
                    "optimizer moment shape mismatch for {}",
                    e.name
                )));
            }
        }
        if m.len() != params.len() || v.len() != params.len() {
            return Err(Error::Checkpoint("optimizer moment count mismatch".into()));
        }
        Ok(OptimizerState { config, step, m, v })
    }

    /// One update from the gradients currently stored on the parameters.
    /// Gradients are left untouched; the caller clears them.
    pub fn step(&mut self, params: &mut ParameterStore<F>) -> Result<()> {
        for e in params.iter() {
            if e.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of parameter {}", e.name)));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let cfg = self.config;
        let gnorm = params.grad_norm();
        let clip_scale = if cfg.clip_norm > 0.0 && gnorm > cfg.clip_norm {
            cfg.clip_norm / gnorm
        } else {
            1.0
        };
        let b1 = F::of(cfg.beta1);
        let b2 = F::of(cfg.beta2);
        let one = F::one();
        let bc1 = F::of(1.0 - cfg.beta1.powi(t));
        let bc2 = F::of(1.0 - cfg.beta2.powi(t));
        let lr = F::of(cfg.learning_rate);
        let eps = F::of(cfg.eps);
        let cs = F::of(clip_scale);
        for (idx, e) in params.entries_mut().iter_mut().enumerate() {
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            for i in 0..e.values.len() {
                let g = e.grad[i] * cs;
                m[i] = b1 * m[i] + (one - b1) * g;
                v[i] = b2 * v[i] + (one - b2) * g * g;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                e.values[i] = e.values[i] - lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_is_minus_lr_for_unit_gradient() {
        // Bias-corrected moments cancel: first update = -lr * g/|g|.
        let mut params: ParameterStore<f64> = ParameterStore::new();
        let idx = params.insert("w", vec![1], vec![2.0], "test");
        params.add_grad(idx, &[1.0]);
        let mut state = OptimizerState::new(
            &params,
            OptimizerConfig { learning_rate: 0.1, ..Default::default() },
        );
        state.step(&mut params).unwrap();
        let w = params.values("w")[0];
        assert!((w - 1.9).abs() < 1e-6, "w = {w}");
        assert_eq!(state.step, 1);
    }

    #[test]
    fn zero_gradient_keeps_values() {
        let mut params: ParameterStore<f64> = ParameterStore::new();
        params.insert("w", vec![3], vec![1.0, -2.0, 0.5], "test");
        let mut state = OptimizerState::new(&params, OptimizerConfig::default());
        state.step(&mut params).unwrap();
        assert_eq!(params.values("w"), &[1.0, -2.0, 0.5]);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let mut params: ParameterStore<f64> = ParameterStore::new();
        let idx = params.insert("enc.w", vec![1], vec![0.0], "test");
        params.add_grad(idx, &[f64::NAN]);
        let mut state = OptimizerState::new(&params, OptimizerConfig::default());
        let err = state.step(&mut params).unwrap_err();
        assert!(err.to_string().contains("enc.w"));
    }

    #[test]
    fn deterministic_trajectories() {
        let run = || {
            let mut params: ParameterStore<f32> = ParameterStore::new();
            let idx = params.insert("w", vec![2], vec![0.3, -0.7], "test");
            let mut state = OptimizerState::new(&params, OptimizerConfig::default());
            for step in 0..50 {
                params.zero_grads();
                let w = params.values("w").to_vec();
                params.add_grad(idx, &[w[0] * 2.0 + step as f32 * 0.01, w[1]]);
                state.step(&mut params).unwrap();
            }
            params.values("w").to_vec()
        };
        assert_eq!(run(), run());
    }
}
