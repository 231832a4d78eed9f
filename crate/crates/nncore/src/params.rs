//! Named parameter collection and the Adam update rule.
//!
//! Parameters live in a BTreeMap so every iteration over the set visits
//! names in the same order; that ordering is part of the determinism
//! contract for both optimization and serialization.

use std::collections::BTreeMap;

use crate::tensor::Tensor;
use crate::{NnError, Result};

#[derive(Debug, Clone)]
pub struct Param {
    pub value: Tensor,
    pub grad: Vec<f32>,
}

#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    entries: BTreeMap<String, Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) {
        let grad = vec![0.0; value.numel()];
        self.entries.insert(name.to_string(), Param { value, grad });
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<&Param> {
        self.entries.get(name).ok_or_else(|| NnError::UnknownParam(name.into()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Param> {
        self.entries.get_mut(name).ok_or_else(|| NnError::UnknownParam(name.into()))
    }

    pub fn value(&self, name: &str) -> Result<&Tensor> {
        Ok(&self.get(name)?.value)
    }

    /// Name-ordered iteration; the only way code outside walks the set.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.entries.values().map(|p| p.value.numel()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in self.entries.values_mut() {
            p.grad.fill(0.0);
        }
    }
}

/// First and second moment buffers plus the shared step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
    pub step: u64,
    moments: BTreeMap<String, (Vec<f32>, Vec<f32>)>,
}

impl AdamState {
    pub fn new(learning_rate: f32) -> Self {
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn moments(&self, name: &str) -> Option<&(Vec<f32>, Vec<f32>)> {
        self.moments.get(name)
    }

    pub fn set_moments(&mut self, name: &str, m: Vec<f32>, v: Vec<f32>) {
        self.moments.insert(name.to_string(), (m, v));
    }

    pub fn moment_names(&self) -> impl Iterator<Item = &str> {
        self.moments.keys().map(|s| s.as_str())
    }
}

/// One Adam step with bias correction over every parameter in the set.
/// Gradients are zeroed after a successful update. A non-finite gradient
/// anywhere aborts before touching any parameter.
pub fn adam_step(params: &mut ParamSet, state: &mut AdamState) -> Result<()> {
    for (name, p) in params.iter() {
        if p.grad.iter().any(|g| !g.is_finite()) {
            return Err(NnError::NonFinite { context: format!("gradient of {}", name) });
        }
    }
    state.step += 1;
    let t = state.step as f64;
    let b1 = state.beta1 as f64;
    let b2 = state.beta2 as f64;
    let corr1 = (1.0 - b1.powi(t as i32)) as f32;
    let corr2 = (1.0 - b2.powi(t as i32)) as f32;
    for (name, p) in params.iter_mut() {
        let (m, v) = state
            .moments
            .entry(name.to_string())
            .or_insert_with(|| (vec![0.0; p.grad.len()], vec![0.0; p.grad.len()]));
        let value = p.value.data_mut();
        for i in 0..p.grad.len() {
            let g = p.grad[i];
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
            let m_hat = m[i] / corr1;
            let v_hat = v[i] / corr2;
            value[i] -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
        }
        p.grad.fill(0.0);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iteration_is_name_ordered() {
        let mut ps = ParamSet::new();
        ps.insert("zeta", Tensor::scalar(1.0));
        ps.insert("alpha", Tensor::scalar(2.0));
        ps.insert("mid", Tensor::scalar(3.0));
        let names: Vec<&str> = ps.iter().map(|(n, _)| n).collect();
        assert_eq!(names, vec!["alpha", "mid", "zeta"]);
    }

    #[test]
    fn adam_first_step_matches_closed_form() {
        // With g = 1 from zero state: m_hat = 1, v_hat = 1, so the update is
        // exactly lr / (1 + eps) regardless of betas.
        let mut ps = ParamSet::new();
        ps.insert("w", Tensor::scalar(0.0));
        ps.get_mut("w").unwrap().grad[0] = 1.0;
        let mut adam = AdamState::new(1e-4);
        adam_step(&mut ps, &mut adam).unwrap();
        let expect = -1e-4f32 / (1.0 + 1e-8);
        let got = ps.value("w").unwrap().data()[0];
        assert!((got - expect).abs() < 1e-8, "{} vs {}", got, expect);
        assert_eq!(adam.step, 1);
        assert_eq!(ps.get("w").unwrap().grad[0], 0.0);
    }

    #[test]
    fn adam_second_step_hand_computed() {
        // Two steps with constant gradient 2.0 on one scalar, lr 0.1.
        // m1 = 0.2, v1 = 0.004; m_hat = 2, v_hat = 4, step1 = -0.1 * 2 / (2 + eps)
        // m2 = 0.38, v2 = 0.007996; corr1 = 0.19, corr2 = 0.001999
        // m_hat = 2, v_hat = 4.0 (constant gradient keeps hats at g, g^2)
        let mut ps = ParamSet::new();
        ps.insert("w", Tensor::scalar(1.0));
        let mut adam = AdamState::new(0.1);
        for _ in 0..2 {
            ps.get_mut("w").unwrap().grad[0] = 2.0;
            adam_step(&mut ps, &mut adam).unwrap();
        }
        // Each step should be ~ -0.1 * 2 / 2 = -0.1.
        let got = ps.value("w").unwrap().data()[0];
        assert!((got - 0.8).abs() < 1e-5, "{}", got);
    }

    #[test]
    fn nan_gradient_aborts_without_update() {
        let mut ps = ParamSet::new();
        ps.insert("a", Tensor::scalar(1.0));
        ps.insert("b", Tensor::scalar(2.0));
        ps.get_mut("a").unwrap().grad[0] = f32::NAN;
        ps.get_mut("b").unwrap().grad[0] = 1.0;
        let mut adam = AdamState::new(0.1);
        assert!(adam_step(&mut ps, &mut adam).is_err());
        assert_eq!(ps.value("a").unwrap().data()[0], 1.0);
        assert_eq!(ps.value("b").unwrap().data()[0], 2.0);
        assert_eq!(adam.step, 0);
    }
}
