//! Central finite-difference verification of analytic gradients.
//!
//! A layer under test exposes its differentiable arguments (input first,
//! then parameters) as flat slices. The scalar probed is `sum(r * y)` for a
//! fixed random projection `r`, whose analytic gradient is exactly
//! `backward(r)`.

use rand::Rng as _;

use super::tensor::Tensor;
use crate::seed::rng;

pub trait Differentiable {
    /// Mutable views of every differentiable argument.
    fn arguments(&mut self) -> Vec<&mut [f64]>;
    fn forward(&self) -> Tensor<f64>;
    /// Gradients of `sum(upstream * forward())`, one vector per argument.
    fn backward(&self, upstream: &Tensor<f64>) -> Vec<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// (argument index, coordinate) of the worst coordinate.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates: usize,
}

impl GradCheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

/// Denominator floor for the relative error: near-zero gradients are compared
/// absolutely at this scale.
pub const REL_ERROR_FLOOR: f64 = 1e-3;

pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERROR_FLOOR)
}

/// Uniform `[-1, 1)` tensor.
pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut r = rng(seed ^ 0x5eed_7e57);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()).expect("shape product")
}

fn project(y: &Tensor<f64>, r: &Tensor<f64>) -> f64 {
    y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

/// Compares analytic and central-difference gradients over every coordinate
/// of every argument.
pub fn grad_check(layer: &mut dyn Differentiable, seed: u64, eps: f64) -> GradCheckReport {
    let y = layer.forward();
    let r = random_tensor(y.shape(), seed.wrapping_add(0xabc));
    let analytic = layer.backward(&r);
    let mut report =
        GradCheckReport { max_rel_error: 0.0, worst: (0, 0), analytic: 0.0, numeric: 0.0, coordinates: 0 };
    let n_args = layer.arguments().len();
    for arg in 0..n_args {
        let len = layer.arguments()[arg].len();
        assert_eq!(analytic[arg].len(), len, "gradient {arg} has the wrong length");
        for i in 0..len {
            let orig = layer.arguments()[arg][i];
            layer.arguments()[arg][i] = orig + eps;
            let plus = project(&layer.forward(), &r);
            layer.arguments()[arg][i] = orig - eps;
            let minus = project(&layer.forward(), &r);
            layer.arguments()[arg][i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let err = rel_error(analytic[arg][i], numeric);
            report.coordinates += 1;
            if err > report.max_rel_error || report.coordinates == 1 {
                report.max_rel_error = err;
                report.worst = (arg, i);
                report.analytic = analytic[arg][i];
                report.numeric = numeric;
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    /// y = a * x elementwise with a deliberately broken gradient for `a[0]`.
    struct Scale {
        x: Tensor<f64>,
        a: Tensor<f64>,
        corrupt: bool,
    }

    impl Differentiable for Scale {
        fn arguments(&mut self) -> Vec<&mut [f64]> {
            vec![self.x.data_mut(), self.a.data_mut()]
        }
        fn forward(&self) -> Tensor<f64> {
            let d = self.x.data().iter().zip(self.a.data()).map(|(x, a)| x * a).collect();
            Tensor::new(self.x.shape().to_vec(), d).unwrap()
        }
        fn backward(&self, u: &Tensor<f64>) -> Vec<Vec<f64>> {
            let dx = u.data().iter().zip(self.a.data()).map(|(u, a)| u * a).collect();
            let mut da: Vec<f64> = u.data().iter().zip(self.x.data()).map(|(u, x)| u * x).collect();
            if self.corrupt {
                da[0] = 0.0;
            }
            vec![dx, da]
        }
    }

    #[test]
    fn exact_layer_passes_and_corruption_is_flagged() {
        let mut ok = Scale { x: random_tensor(&[6], 1), a: random_tensor(&[6], 2), corrupt: false };
        assert!(grad_check(&mut ok, 0, 1e-5).passed(1e-6));
        let mut bad = Scale { corrupt: true, ..ok };
        let report = grad_check(&mut bad, 0, 1e-5);
        assert!(report.max_rel_error > 1e-2);
        assert_eq!(report.worst, (1, 0));
    }
}
