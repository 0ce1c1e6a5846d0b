use super::tensor::{Scalar, Tensor};
use crate::error::{shape, Result};

pub fn relu_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let mut y = x.clone();
    relu_inplace(&mut y);
    y
}

pub fn relu_inplace<T: Scalar>(x: &mut Tensor<T>) {
    x.data_mut().iter_mut().for_each(|v| {
        if *v < T::zero() {
            *v = T::zero()
        }
    });
}

/// Gradient through ReLU given its forward output: passes where `y > 0`.
pub fn relu_backward<T: Scalar>(y: &Tensor<T>, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    if y.shape() != upstream.shape() {
        return shape(format!("relu upstream {:?} vs output {:?}", upstream.shape(), y.shape()));
    }
    let d = y.data().iter().zip(upstream.data()).map(|(y, u)| if *y > T::zero() { *u } else { T::zero() }).collect();
    Tensor::new(y.shape().to_vec(), d)
}
