use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::{c, Scalar};
use super::NdError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
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

/// First/second moment accumulators for every parameter.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    m: ParamStore<T>,
    v: ParamStore<T>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParamStore<T>, config: AdamConfig) -> Result<Self, NdError> {
        if config.lr <= 0.0 || !config.lr.is_finite() {
            return Err(NdError::Invalid(format!("learning rate {} must be > 0", config.lr)));
        }
        Ok(Self {
            config,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        })
    }

    pub fn first_moment(&self) -> &ParamStore<T> {
        &self.m
    }

    pub fn second_moment(&self) -> &ParamStore<T> {
        &self.v
    }

    /// One bias-corrected Adam update. Rejects non-finite gradients before
    /// touching any state.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &ParamStore<T>) -> Result<(), NdError> {
        for (name, g) in grads.iter() {
            if !g.is_finite() {
                return Err(NdError::NonFiniteGradient(name.clone()));
            }
            let p = params.get(name)?;
            if p.shape() != g.shape() {
                return Err(NdError::ShapeMismatch {
                    op: "adam_step",
                    left: p.shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let (b1, b2): (T, T) = (c(beta1), c(beta2));
        let (lr, eps, bc1, bc2): (T, T, T, T) = (c(lr), c(eps), c(bc1), c(bc2));
        for (name, g) in grads.iter() {
            let m = self.m.get_mut(name)?.data_mut();
            let v = self.v.get_mut(name)?.data_mut();
            let p = params.get_mut(name)?.data_mut();
            for i in 0..p.len() {
                let gi = g.data()[i];
                m[i] = b1 * m[i] + (T::one() - b1) * gi;
                v[i] = b2 * v[i] + (T::one() - b2) * gi * gi;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] = p[i] - lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
