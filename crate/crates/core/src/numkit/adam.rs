use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::tensor::Tensor;

/// Named parameter tensors in a stable (sorted) order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamSet(BTreeMap<String, Tensor>);

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.0.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.0.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.0.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.0.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.0.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.0.keys()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Total number of scalar entries.
    pub fn scalar_count(&self) -> usize {
        self.0.values().map(Tensor::len).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self(
            self.0
                .iter()
                .map(|(k, t)| (k.clone(), Tensor::zeros(t.rows(), t.cols())))
                .collect(),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 8e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for a [`ParamSet`], with bias correction.
#[derive(Clone, Debug)]
pub struct AdamState {
    config: AdamConfig,
    first: ParamSet,
    second: ParamSet,
    step: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet, config: AdamConfig) -> Self {
        Self {
            config,
            first: params.zeros_like(),
            second: params.zeros_like(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    /// Applies one update. `grads` may omit parameters that received no gradient;
    /// those are treated as zero (their moments still decay).
    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamSet) -> Result<()> {
        for (name, g) in grads.iter() {
            match params.get(name) {
                Some(p) if p.shape() == g.shape() => {}
                Some(p) => {
                    return Err(Error::dim(
                        "adam_step",
                        format!("{name}: param {:?}, grad {:?}", p.shape(), g.shape()),
                    ))
                }
                None => return Err(Error::Contract(format!("gradient for unknown parameter {name}"))),
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (name, p) in params.iter_mut() {
            let m = self
                .first
                .get_mut(name)
                .ok_or_else(|| Error::Contract(format!("moment buffer missing for {name}")))?;
            let v = self.second.get_mut(name).expect("moment buffers share keys");
            if m.shape() != p.shape() {
                return Err(Error::dim("adam_step", format!("{name}: moment shape changed")));
            }
            let g = grads.get(name);
            for i in 0..p.len() {
                let gi = g.map_or(0.0, |g| g.data()[i]);
                let mi = beta1 * m.data()[i] + (1.0 - beta1) * gi;
                let vi = beta2 * v.data()[i] + (1.0 - beta2) * gi * gi;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                p.data_mut()[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(name: &str, v: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert(name, Tensor::scalar(v));
        p
    }

    #[test]
    fn zero_gradient_leaves_parameter_unchanged() {
        let mut params = single("w", 0.7);
        let mut state = AdamState::new(&params, AdamConfig::with_lr(1e-2));
        state.step(&mut params, &single("w", 0.0)).unwrap();
        assert_eq!(params.get("w").unwrap().data()[0], 0.7);
    }

    #[test]
    fn first_step_matches_hand_expansion() {
        // m = 0.1 g, v = 0.001 g^2; m_hat = g, v_hat = g^2, so Δ = -lr g / (|g| + eps).
        let lr = 1e-3;
        let g = -0.25;
        let mut params = single("w", 1.0);
        let mut state = AdamState::new(&params, AdamConfig::with_lr(lr));
        state.step(&mut params, &single("w", g)).unwrap();
        let expected = 1.0 - lr * g / (g.abs() + 1e-8);
        assert!((params.get("w").unwrap().data()[0] - expected).abs() < 1e-15);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn two_steps_on_quadratic_decrease_loss() {
        // loss = (w - 3)^2
        let loss = |w: f64| (w - 3.0) * (w - 3.0);
        let mut params = single("w", 0.0);
        let mut state = AdamState::new(&params, AdamConfig::with_lr(1e-2));
        let mut prev = loss(0.0);
        for _ in 0..2 {
            let w = params.get("w").unwrap().data()[0];
            state.step(&mut params, &single("w", 2.0 * (w - 3.0))).unwrap();
            let now = loss(params.get("w").unwrap().data()[0]);
            assert!(now < prev);
            prev = now;
        }
    }

    #[test]
    fn shape_mismatch_is_a_dimension_error() {
        let mut params = single("w", 0.0);
        let mut state = AdamState::new(&params, AdamConfig::default());
        let mut bad = ParamSet::new();
        bad.insert("w", Tensor::zeros(2, 1));
        assert!(matches!(state.step(&mut params, &bad), Err(Error::Dimension { .. })));
    }
}
