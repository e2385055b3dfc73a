use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{ParameterSet, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("learning_rate", "must be positive and finite"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::param(name, "must lie in [0, 1)"));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::param("epsilon", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Bias-corrected Adam. Moment buffers are keyed by parameter name, so one
/// optimizer can drive any subset of a [`ParameterSet`].
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    moments: HashMap<String, Moments>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, step: 0, moments: HashMap::new() })
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Descent step `θ ← θ − lr · m̂ / (√v̂ + ε)`. Parameters absent from
    /// `grads` are left alone.
    pub fn step(&mut self, params: &mut ParameterSet, grads: &ParameterSet) -> Result<()> {
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for (name, p) in params.iter_mut() {
            let Some(g) = grads.get(name) else { continue };
            if g.numel() != p.numel() {
                return Err(Error::shape("Adam::step", p.shape(), g.shape()));
            }
            let mo = self.moments.entry(name.to_string()).or_insert_with(|| Moments {
                m: vec![0.0; p.numel()],
                v: vec![0.0; p.numel()],
            });
            for (((x, gi), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(&mut mo.m).zip(&mut mo.v) {
                *m = c.beta1 * *m + (1.0 - c.beta1) * gi;
                *v = c.beta2 * *v + (1.0 - c.beta2) * gi * gi;
                *x -= c.learning_rate * (*m / bc1) / ((*v / bc2).sqrt() + c.epsilon);
            }
        }
        Ok(())
    }

    /// Convenience for a single tensor registered under `name`.
    pub fn step_tensor(&mut self, name: &str, value: &mut Tensor, grad: &Tensor) -> Result<()> {
        let mut p = ParameterSet::new();
        p.insert(name, value.clone())?;
        let mut g = ParameterSet::new();
        g.insert(name, grad.clone())?;
        self.step(&mut p, &g)?;
        *value = p.get(name).expect("inserted above").clone();
        Ok(())
    }
}
