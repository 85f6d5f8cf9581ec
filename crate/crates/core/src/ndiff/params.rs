use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::tape::{Gradients, Tape, Var};
use super::tensor::{c, Scalar, Tensor};
use super::NdError;

/// Named parameter tensors, kept in name order so iteration is deterministic.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T> {
    tensors: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self {
            tensors: BTreeMap::new(),
        }
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<T>) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>, NdError> {
        self.tensors
            .get(name)
            .ok_or_else(|| NdError::MissingParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>, NdError> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| NdError::MissingParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.tensors.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
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

    /// Glorot-uniform matrix `fan_in × fan_out`.
    pub fn init_linear<R: Rng + ?Sized>(&mut self, name: &str, fan_in: usize, fan_out: usize, rng: &mut R) {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| c(rng.random_range(-limit..limit)))
            .collect();
        self.insert(name, Tensor::new(&[fan_in, fan_out], data).expect("sized"));
    }

    pub fn init_normal<R: Rng + ?Sized>(&mut self, name: &str, shape: &[usize], std: f64, rng: &mut R) {
        let dist = Normal::new(0.0, std).expect("positive std");
        let n = shape.iter().product();
        let data = (0..n).map(|_| c(dist.sample(rng))).collect();
        self.insert(name, Tensor::new(shape, data).expect("sized"));
    }

    pub fn init_const(&mut self, name: &str, shape: &[usize], v: f64) {
        self.insert(name, Tensor::full(shape, c(v)));
    }
}

/// Parameters placed on a tape for one forward pass.
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    /// Put every parameter on `tape` as a leaf (trainable when `train` is set).
    pub fn bind<T: Scalar>(tape: &mut Tape<T>, store: &ParamStore<T>, trainable: bool) -> Self {
        let vars = store
            .iter()
            .map(|(k, v)| (k.clone(), tape.leaf(v.clone(), trainable)))
            .collect();
        Self { vars }
    }

    /// Wrap vars that are already on a tape, paired with parameter names.
    pub fn from_vars<'a>(names: impl IntoIterator<Item = &'a String>, vars: &[Var]) -> Self {
        Self {
            vars: names.into_iter().cloned().zip(vars.iter().copied()).collect(),
        }
    }

    pub fn var(&self, name: &str) -> Result<Var, NdError> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| NdError::MissingParam(name.to_string()))
    }

    /// Collect per-parameter gradients into a store keyed like the parameters.
    pub fn gradients<T: Scalar>(&self, grads: &Gradients<T>) -> Result<ParamStore<T>, NdError> {
        let mut out = ParamStore::new();
        for (k, v) in &self.vars {
            out.insert(k.clone(), grads.get(*v)?.clone());
        }
        Ok(out)
    }
}

impl<T: Scalar> ParamStore<T> {
    /// Elementwise accumulate `other` (same names and shapes) into `self`.
    pub fn accumulate(&mut self, other: &ParamStore<T>) -> Result<(), NdError> {
        for (k, v) in other.iter() {
            let mine = self.get_mut(k)?;
            if mine.shape() != v.shape() {
                return Err(NdError::ShapeMismatch {
                    op: "accumulate",
                    left: mine.shape().to_vec(),
                    right: v.shape().to_vec(),
                });
            }
            mine.add_assign(v);
        }
        Ok(())
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros(v.shape())))
                .collect(),
        }
    }
}
