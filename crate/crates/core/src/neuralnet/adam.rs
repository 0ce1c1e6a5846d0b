//! Adam optimizer and global-norm gradient clipping.

use serde::{Deserialize, Serialize};

use super::tensor::{Scalar, Tensor};
use crate::error::{shape, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
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

/// First/second moment estimates, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Tensor<T>>) -> Self {
        let (m, v) = params.into_iter().map(|p| (Tensor::zeros(p.shape()), Tensor::zeros(p.shape()))).unzip();
        Self { config, step: 0, m, v }
    }

    /// One bias-corrected Adam update.
    pub fn update(&mut self, params: &mut [&mut Tensor<T>], grads: &[&Tensor<T>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return shape(format!(
                "optimizer tracks {} tensors, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            ));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return shape(format!("param {:?} vs grad {:?}", p.shape(), g.shape()));
            }
        }
        self.step += 1;
        let c = self.config;
        let b1 = T::from_f64_lossy(c.beta1);
        let b2 = T::from_f64_lossy(c.beta2);
        let one = T::one();
        let bc1 = T::from_f64_lossy(1.0 - c.beta1.powi(self.step as i32));
        let bc2 = T::from_f64_lossy(1.0 - c.beta2.powi(self.step as i32));
        let lr = T::from_f64_lossy(c.lr);
        let eps = T::from_f64_lossy(c.eps);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mi = b1 * *mi + (one - b1) * gi;
                *vi = b2 * *vi + (one - b2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

pub fn global_norm<T: Scalar>(grads: &[&Tensor<T>]) -> f64 {
    grads.iter().map(|g| g.sum_squares()).sum::<f64>().sqrt()
}

/// Rescales all gradients together so their joint L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm<T: Scalar>(grads: &mut [&mut Tensor<T>], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g.sum_squares()).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = T::from_f64_lossy(max_norm / norm);
        grads.iter_mut().for_each(|g| g.scale(s));
    }
    norm
}
