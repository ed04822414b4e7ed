//! Named parameter storage and the Adam update rule.

use std::collections::BTreeMap;

use rand::Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Parameter name → gradient.
pub type GradMap = BTreeMap<String, Tensor>;

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub m: Tensor,
    pub v: Tensor,
}

/// Adam hyper-parameters other than the learning rate.
#[derive(Clone, Copy, Debug, PartialEq)]
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

/// The weights of one model plus their Adam moments and step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore {
    name: String,
    params: BTreeMap<String, Param>,
    step: u64,
}

impl ParamStore {
    pub fn new(name: impl Into<String>) -> Self {
        ParamStore {
            name: name.into(),
            params: BTreeMap::new(),
            step: 0,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar weights.
    pub fn num_values(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(Error::invalid(format!("duplicate parameter {}.{name}", self.name)));
        }
        let m = Tensor::zeros(value.shape());
        let v = Tensor::zeros(value.shape());
        self.params.insert(name, Param { value, m, v });
        Ok(())
    }

    /// Registers a parameter drawn uniformly from `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn insert_uniform<R: Rng>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        rng: &mut R,
    ) -> Result<()> {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let count = shape.iter().product();
        let data = (0..count).map(|_| rng.random_range(-bound..=bound)).collect();
        self.insert(name, Tensor::new(shape.to_vec(), data)?)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name).map(|p| &p.value)
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.get(name)
    }

    /// Replaces a parameter value, keeping its shape.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let p = self
            .params
            .get_mut(name)
            .ok_or_else(|| Error::invalid(format!("unknown parameter {name}")))?;
        if p.value.shape() != value.shape() {
            return Err(Error::shape(
                "set",
                format!("{name}: {:?} vs {:?}", p.value.shape(), value.shape()),
            ));
        }
        p.value = value;
        Ok(())
    }

    pub fn values_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        self.params.get_mut(name).map(|p| p.value.values_mut())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, p)| (k.as_str(), &p.value))
    }

    pub fn iter_params(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.params.iter().map(|(k, p)| (k.as_str(), p))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    /// Rebuilds a store from serialized parts.
    pub(crate) fn from_parts(name: String, step: u64, params: BTreeMap<String, Param>) -> Result<Self> {
        for (k, p) in &params {
            if p.m.shape() != p.value.shape() || p.v.shape() != p.value.shape() {
                return Err(Error::Format(format!("moment shape mismatch for {name}.{k}")));
            }
        }
        Ok(ParamStore { name, params, step })
    }

    /// One bias-corrected Adam step. Parameters absent from `grads` keep
    /// their values and moments.
    pub fn adam_update(&mut self, grads: &GradMap, lr: f64, cfg: AdamConfig) -> Result<()> {
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(Error::invalid(format!("learning rate must be positive, got {lr}")));
        }
        for (name, g) in grads {
            let p = self
                .params
                .get(name)
                .ok_or_else(|| Error::invalid(format!("gradient for unknown parameter {name}")))?;
            if p.value.shape() != g.shape() {
                return Err(Error::shape(
                    "adam",
                    format!("{name}: parameter {:?} vs gradient {:?}", p.value.shape(), g.shape()),
                ));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for (name, g) in grads {
            let p = self.params.get_mut(name).expect("checked above");
            let gv = g.values();
            let m = p.m.values_mut();
            for (mi, gi) in m.iter_mut().zip(gv) {
                *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
            }
            let v = p.v.values_mut();
            for (vi, gi) in v.iter_mut().zip(gv) {
                *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
            }
            let (m, v) = (p.m.values(), p.v.values());
            for ((w, mi), vi) in p.value.values_mut().iter_mut().zip(m).zip(v) {
                let mhat = mi / c1;
                let vhat = vi / c2;
                *w -= lr * mhat / (vhat.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }
}
