use rand::Rng as _;

use super::tensor::{Scalar, Tensor};
use crate::seed::Rng;

/// Uniform on `[-limit, limit)`.
pub fn uniform<T: Scalar>(shape: &[usize], limit: f64, rng: &mut Rng) -> Tensor<T> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::from_f64_lossy(rng.gen_range(-limit..limit))).collect();
    Tensor::new(shape.to_vec(), data).expect("shape product")
}

/// Glorot/Xavier uniform: `limit = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<T: Scalar>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut Rng) -> Tensor<T> {
    uniform(shape, (6.0 / (fan_in + fan_out) as f64).sqrt(), rng)
}
