use std::collections::BTreeMap;

use super::{Graph, Scalar, Tensor, Var};
use crate::error::{Error, Result};

/// Named trainable tensors, iterated in lexicographic name order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    tensors: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<T>) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
        }
    }

    /// Registers every tensor as a trainable leaf of `g`.
    pub fn bind(&self, g: &mut Graph<T>) -> BTreeMap<String, Var> {
        self.tensors
            .iter()
            .map(|(k, v)| (k.clone(), g.param(v.clone())))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adaptive-moment optimizer with bias correction.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    first: BTreeMap<String, Vec<T>>,
    second: BTreeMap<String, Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    /// Applies one update. Parameters absent from `grads` are treated as
    /// having zero gradient. Nothing is modified if any gradient is
    /// non-finite or mis-shaped.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &BTreeMap<String, Tensor<T>>) -> Result<()> {
        for (name, g) in grads {
            let p = params
                .get(name)
                .ok_or_else(|| Error::invalid("optimizer_step", format!("gradient for unknown parameter {name}")))?;
            if p.shape() != g.shape() {
                return Err(Error::shape("optimizer_step", p.shape(), g.shape()));
            }
            if !g.is_finite() {
                return Err(Error::NonFinite {
                    what: format!("gradient of {name}"),
                });
            }
        }

        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let b1 = T::from_f64_lossy(c.beta1);
        let b2 = T::from_f64_lossy(c.beta2);
        let one = T::one();
        let corr1 = T::from_f64_lossy(1.0 - c.beta1.powi(t));
        let corr2 = T::from_f64_lossy(1.0 - c.beta2.powi(t));
        let lr = T::from_f64_lossy(c.lr);
        let eps = T::from_f64_lossy(c.eps);

        for (name, p) in params.tensors.iter_mut() {
            let n = p.numel();
            let m = self.first.entry(name.clone()).or_insert_with(|| vec![T::zero(); n]);
            let v = self.second.entry(name.clone()).or_insert_with(|| vec![T::zero(); n]);
            let g = grads.get(name).map(Tensor::data);
            for i in 0..n {
                let gi = g.map_or(T::zero(), |g| g[i]);
                m[i] = b1 * m[i] + (one - b1) * gi;
                v[i] = b2 * v[i] + (one - b2) * gi * gi;
                let mhat = m[i] / corr1;
                let vhat = v[i] / corr2;
                let pd = p.data_mut();
                pd[i] = pd[i] - lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
