//! Adam with bias correction and decoupled weight decay.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::store::ParamStore;
use super::tape::GradMap;
use super::tensor::Tensor;
use super::NnError;

/// Optimizer hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay, applied after the adaptive step.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.937,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.005,
        }
    }
}

/// First and second moment state per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    cfg: AdamConfig,
    t: u64,
    m: IndexMap<String, Tensor>,
    v: IndexMap<String, Tensor>,
}

impl AdamState {
    pub fn new(cfg: AdamConfig) -> Self {
        AdamState {
            cfg,
            t: 0,
            m: IndexMap::new(),
            v: IndexMap::new(),
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.cfg
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Moment tensors in first-touch order, for serialization.
    pub fn moments(&self) -> (&IndexMap<String, Tensor>, &IndexMap<String, Tensor>) {
        (&self.m, &self.v)
    }

    /// Rebuilds optimizer state from serialized pieces.
    pub fn from_raw(
        cfg: AdamConfig,
        t: u64,
        m: IndexMap<String, Tensor>,
        v: IndexMap<String, Tensor>,
    ) -> Self {
        AdamState { cfg, t, m, v }
    }

    /// One update over every parameter in store order. Parameters without a
    /// gradient this step see a zero gradient (their moments still decay).
    /// `lr_scale` multiplies the learning rate, for warm-up schedules; it
    /// scales the weight-decay step too.
    pub fn step(
        &mut self,
        params: &mut ParamStore,
        grads: &GradMap,
        lr_scale: f64,
    ) -> Result<(), NnError> {
        for name in grads.keys() {
            params.get(name)?;
        }
        self.t += 1;
        let c = self.cfg;
        let lr = c.lr * lr_scale;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        for (name, value) in params.iter_mut() {
            let m = self
                .m
                .entry(name.to_string())
                .or_insert_with(|| Tensor::zeros(value.shape()));
            let v = self
                .v
                .entry(name.to_string())
                .or_insert_with(|| Tensor::zeros(value.shape()));
            let grad = grads.get(name);
            for e in 0..value.numel() {
                let g = grad.map_or(0.0, |t| t.data()[e]);
                let me = &mut m.data_mut()[e];
                *me = c.beta1 * *me + (1.0 - c.beta1) * g;
                let ve = &mut v.data_mut()[e];
                *ve = c.beta2 * *ve + (1.0 - c.beta2) * g * g;
                let m_hat = *me / bc1;
                let v_hat = *ve / bc2;
                let theta = &mut value.data_mut()[e];
                *theta -= lr * m_hat / (v_hat.sqrt() + c.eps);
                *theta -= lr * c.weight_decay * *theta;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn store_with_scalar(v: f64) -> ParamStore {
        let mut s = ParamStore::new(0);
        s.insert("theta", Tensor::vector(vec![v])).unwrap();
        s
    }

    #[test]
    fn first_step_moves_by_lr() {
        // Bias correction makes the very first update step exactly
        // lr * g / (|g| + eps) regardless of the betas.
        let mut params = store_with_scalar(0.0);
        let cfg = AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        };
        let mut adam = AdamState::new(cfg);
        let mut grads = GradMap::new();
        grads.insert("theta".into(), Tensor::vector(vec![1.0]));
        adam.step(&mut params, &grads, 1.0).unwrap();
        let got = params.get("theta").unwrap().data()[0];
        assert_abs_diff_eq!(got, -1e-4, epsilon = 1e-9);
    }

    #[test]
    fn zero_lr_keeps_parameters_fixed() {
        let mut params = store_with_scalar(0.7);
        let cfg = AdamConfig {
            lr: 0.0,
            ..AdamConfig::default()
        };
        let mut adam = AdamState::new(cfg);
        let mut grads = GradMap::new();
        grads.insert("theta".into(), Tensor::vector(vec![3.0]));
        adam.step(&mut params, &grads, 1.0).unwrap();
        assert_eq!(params.get("theta").unwrap().data()[0], 0.7);
    }

    #[test]
    fn decay_is_decoupled_from_the_adaptive_step() {
        // With a zero gradient the adaptive step is zero and only the decay
        // term moves the parameter: theta -> theta (1 - lr wd).
        let mut params = store_with_scalar(1.0);
        let cfg = AdamConfig {
            lr: 0.1,
            weight_decay: 0.5,
            ..AdamConfig::default()
        };
        let mut adam = AdamState::new(cfg);
        let grads = GradMap::new();
        adam.step(&mut params, &grads, 1.0).unwrap();
        assert_abs_diff_eq!(
            params.get("theta").unwrap().data()[0],
            1.0 * (1.0 - 0.1 * 0.5),
            epsilon = 1e-12
        );
    }

    #[test]
    fn unknown_grad_name_is_rejected() {
        let mut params = store_with_scalar(0.0);
        let mut adam = AdamState::new(AdamConfig::default());
        let mut grads = GradMap::new();
        grads.insert("nope".into(), Tensor::vector(vec![1.0]));
        assert_eq!(
            adam.step(&mut params, &grads, 1.0).unwrap_err(),
            NnError::UnknownParam("nope".into())
        );
    }
}
