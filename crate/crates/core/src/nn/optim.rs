use std::collections::BTreeMap;

use crate::error::{shape_err, Error, Result};
use crate::nn::{ParamId, Parameter, Tensor};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Debug)]
struct Moments<T> {
    m: Vec<T>,
    v: Vec<T>,
}

/// Adam with bias-corrected moments, keyed by parameter id.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    config: AdamConfig,
    step: u64,
    moments: BTreeMap<ParamId, Moments<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Result<Self> {
        let AdamConfig { lr, beta1, beta2, eps } = config;
        let ok = lr > 0.0 && eps > 0.0 && (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2);
        if !ok {
            return Err(Error::InvalidArgument(format!("bad Adam hyperparameters {config:?}")));
        }
        Ok(Self { config, step: 0, moments: BTreeMap::new() })
    }

    pub fn config(&self) -> AdamConfig {
        self.config
    }

    /// Number of updates applied so far.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update to `params` using the aligned `grads`.
    pub fn step(&mut self, params: &mut [&mut Parameter<T>], grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != grads.len() {
            return shape_err(format!("{} parameters but {} gradients", params.len(), grads.len()));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return shape_err(format!(
                    "gradient for {} has shape {:?}, parameter {:?}",
                    p.name(),
                    g.shape(),
                    p.shape()
                ));
            }
            if let Some(mo) = self.moments.get(&p.id()) {
                if mo.m.len() != g.len() {
                    return shape_err(format!("moment buffers for {} changed size", p.name()));
                }
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let b1 = T::lit(self.config.beta1);
        let b2 = T::lit(self.config.beta2);
        let lr = T::lit(self.config.lr);
        let eps = T::lit(self.config.eps);
        let c1 = T::one() - b1.powi(t);
        let c2 = T::one() - b2.powi(t);

        for (p, g) in params.iter_mut().zip(grads) {
            let n = g.len();
            let mo =
                self.moments.entry(p.id()).or_insert_with(|| Moments { m: vec![T::zero(); n], v: vec![T::zero(); n] });
            for (((x, &gi), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(&mut mo.m).zip(&mut mo.v) {
                *m = b1 * *m + (T::one() - b1) * gi;
                *v = b2 * *v + (T::one() - b2) * gi * gi;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *x = *x - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Joint Euclidean norm of a gradient list.
pub fn global_norm<T: Scalar>(grads: &[Tensor<T>]) -> T {
    grads.iter().fold(T::zero(), |acc, g| acc + g.norm_sq()).sqrt()
}

/// Rescales all gradients together so their joint norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm<T: Scalar>(grads: &mut [Tensor<T>], max_norm: T) -> T {
    let norm = global_norm(grads);
    if norm > max_norm && norm > T::zero() {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|x| *x = *x * s);
        }
    }
    norm
}
