//! 2-D "same" convolution over (time, frequency) with channels last.
//!
//! Input `[T, F, C_in]`, weights `[K, K, C_in, C_out]`, bias `[C_out]`.
//! Both axes are padded by `K / 2` on each side. Frequency padding is always
//! zero; time padding is zero unless a [`TimePadding`] fill is requested,
//! which is how padding contamination is probed empirically.

use super::tensor::{gemm, Scalar, Tensor};
use crate::error::{invalid, shape, Result};

/// Values used for the frames padded before the first and after the last frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimePadding {
    pub before: f64,
    pub after: f64,
}

impl TimePadding {
    pub const ZERO: TimePadding = TimePadding { before: 0.0, after: 0.0 };
}

#[derive(Debug, Clone)]
pub struct Conv2dCache<T> {
    cols: Vec<T>,
    in_shape: [usize; 3],
    kernel: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2dGrads<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub input: Tensor<T>,
}

fn check_shapes<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<(usize, usize, usize, usize, usize)> {
    let [t, f, cin] = match *x.shape() {
        [t, f, c] => [t, f, c],
        _ => return shape(format!("conv input must be [T, F, C], got {:?}", x.shape())),
    };
    let (k, cout) = match *w.shape() {
        [k0, k1, ci, co] if k0 == k1 && ci == cin => (k0, co),
        _ => return shape(format!("conv weight {:?} incompatible with input {:?}", w.shape(), x.shape())),
    };
    if k % 2 == 0 {
        return invalid(format!("conv kernel size must be odd, got {k}"));
    }
    if b.shape() != [cout] {
        return shape(format!("conv bias {:?}, expected [{cout}]", b.shape()));
    }
    Ok((t, f, cin, k, cout))
}

fn im2col<T: Scalar>(x: &Tensor<T>, k: usize, pad: TimePadding) -> Vec<T> {
    let [nt, nf, cin] = [x.shape()[0], x.shape()[1], x.shape()[2]];
    let r = (k / 2) as isize;
    let row = k * k * cin;
    let mut cols = vec![T::zero(); nt * nf * row];
    let xd = x.data();
    let before = T::from_f64_lossy(pad.before);
    let after = T::from_f64_lossy(pad.after);
    for t in 0..nt {
        for f in 0..nf {
            let dst = &mut cols[(t * nf + f) * row..(t * nf + f + 1) * row];
            for dt in 0..k {
                let ts = t as isize + dt as isize - r;
                for df in 0..k {
                    let fs = f as isize + df as isize - r;
                    if fs < 0 || fs >= nf as isize {
                        continue;
                    }
                    let d = &mut dst[(dt * k + df) * cin..(dt * k + df + 1) * cin];
                    if ts < 0 {
                        d.fill(before);
                    } else if ts >= nt as isize {
                        d.fill(after);
                    } else {
                        let s = (ts as usize * nf + fs as usize) * cin;
                        d.copy_from_slice(&xd[s..s + cin]);
                    }
                }
            }
        }
    }
    cols
}

fn col2im<T: Scalar>(dcols: &[T], in_shape: [usize; 3], k: usize) -> Tensor<T> {
    let [nt, nf, cin] = in_shape;
    let r = (k / 2) as isize;
    let row = k * k * cin;
    let mut dx = Tensor::zeros(&in_shape);
    let dxd = dx.data_mut();
    for t in 0..nt {
        for f in 0..nf {
            let src = &dcols[(t * nf + f) * row..(t * nf + f + 1) * row];
            for dt in 0..k {
                let ts = t as isize + dt as isize - r;
                if ts < 0 || ts >= nt as isize {
                    continue;
                }
                for df in 0..k {
                    let fs = f as isize + df as isize - r;
                    if fs < 0 || fs >= nf as isize {
                        continue;
                    }
                    let s = &src[(dt * k + df) * cin..(dt * k + df + 1) * cin];
                    let o = (ts as usize * nf + fs as usize) * cin;
                    dxd[o..o + cin].iter_mut().zip(s).for_each(|(a, b)| *a += *b);
                }
            }
        }
    }
    dx
}

pub fn conv2d_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<(Tensor<T>, Conv2dCache<T>)> {
    conv2d_forward_padded(x, w, b, TimePadding::ZERO)
}

pub fn conv2d_forward_padded<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    pad: TimePadding,
) -> Result<(Tensor<T>, Conv2dCache<T>)> {
    let (nt, nf, cin, k, cout) = check_shapes(x, w, b)?;
    let cols = im2col(x, k, pad);
    let rows = nt * nf;
    let mut out = Vec::with_capacity(rows * cout);
    for _ in 0..rows {
        out.extend_from_slice(b.data());
    }
    gemm(false, false, rows, cout, k * k * cin, &cols, w.data(), T::one(), &mut out);
    let y = Tensor::new(vec![nt, nf, cout], out)?;
    Ok((y, Conv2dCache { cols, in_shape: [nt, nf, cin], kernel: k }))
}

impl<T: Scalar> Conv2dCache<T> {
    pub fn backward(&self, w: &Tensor<T>, upstream: &Tensor<T>) -> Result<Conv2dGrads<T>> {
        let [nt, nf, cin] = self.in_shape;
        let k = self.kernel;
        let cout = w.shape()[3];
        if upstream.shape() != [nt, nf, cout] {
            return shape(format!("conv upstream {:?}, expected {:?}", upstream.shape(), [nt, nf, cout]));
        }
        let rows = nt * nf;
        let kk = k * k * cin;
        let mut dw = vec![T::zero(); kk * cout];
        gemm(true, false, kk, cout, rows, &self.cols, upstream.data(), T::zero(), &mut dw);
        let mut db = vec![T::zero(); cout];
        for r in upstream.data().chunks_exact(cout) {
            db.iter_mut().zip(r).for_each(|(a, b)| *a += *b);
        }
        let mut dcols = vec![T::zero(); rows * kk];
        gemm(false, true, rows, kk, cout, upstream.data(), w.data(), T::zero(), &mut dcols);
        Ok(Conv2dGrads {
            weight: Tensor::new(w.shape().to_vec(), dw)?,
            bias: Tensor::new(vec![cout], db)?,
            input: col2im(&dcols, self.in_shape, k),
        })
    }
}

/// Exact gradient of [`conv2d_forward`] with respect to weights, bias and input.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    upstream: &Tensor<T>,
) -> Result<Conv2dGrads<T>> {
    let cout = w.shape().get(3).copied().unwrap_or(0);
    let (_, _, _, k, _) = check_shapes(x, w, &Tensor::zeros(&[cout]))?;
    let cache = Conv2dCache { cols: im2col(x, k, TimePadding::ZERO), in_shape: [x.shape()[0], x.shape()[1], x.shape()[2]], kernel: k };
    cache.backward(w, upstream)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::gradcheck::{grad_check, random_tensor, Differentiable};

    struct ConvProbe {
        x: Tensor<f64>,
        w: Tensor<f64>,
        b: Tensor<f64>,
    }

    impl Differentiable for ConvProbe {
        fn arguments(&mut self) -> Vec<&mut [f64]> {
            vec![self.x.data_mut(), self.w.data_mut(), self.b.data_mut()]
        }
        fn forward(&self) -> Tensor<f64> {
            conv2d_forward(&self.x, &self.w, &self.b).unwrap().0
        }
        fn backward(&self, upstream: &Tensor<f64>) -> Vec<Vec<f64>> {
            let g = conv2d_backward(&self.x, &self.w, upstream).unwrap();
            vec![g.input.into_data(), g.weight.into_data(), g.bias.into_data()]
        }
    }

    #[test]
    fn identity_kernel() {
        let x = random_tensor(&[3, 4, 1], 1);
        let w = Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap();
        let (y, _) = conv2d_forward(&x, &w, &Tensor::zeros(&[1])).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn padding_arithmetic() {
        let x = Tensor::filled(&[5, 6, 1], 1.0f64);
        let w = Tensor::filled(&[3, 3, 1, 1], 1.0);
        let (y, _) = conv2d_forward(&x, &w, &Tensor::zeros(&[1])).unwrap();
        let at = |t: usize, f: usize| y.data()[t * 6 + f];
        assert_eq!(at(2, 2), 9.0);
        assert_eq!(at(0, 0), 4.0);
        assert_eq!(at(4, 5), 4.0);
        assert_eq!(at(0, 3), 6.0);
        assert_eq!(at(2, 0), 6.0);
    }

    #[test]
    fn even_kernel_rejected() {
        let x = Tensor::<f64>::zeros(&[3, 3, 1]);
        let w = Tensor::zeros(&[2, 2, 1, 1]);
        assert!(conv2d_forward(&x, &w, &Tensor::zeros(&[1])).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..20 {
            let mut p = ConvProbe {
                x: random_tensor(&[4, 5, 2], seed),
                w: random_tensor(&[3, 3, 2, 3], seed + 100),
                b: random_tensor(&[3], seed + 200),
            };
            let report = grad_check(&mut p, seed, 1e-5);
            assert!(report.max_rel_error < 1e-6, "seed {seed}: {report:?}");
        }
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let x = random_tensor(&[4, 5, 2], 1);
        let w = random_tensor(&[3, 3, 2, 3], 2);
        let g = conv2d_backward(&x, &w, &Tensor::zeros(&[4, 5, 3])).unwrap();
        assert!(g.weight.data().iter().chain(g.bias.data()).chain(g.input.data()).all(|v| *v == 0.0));
    }

    #[test]
    fn backward_is_linear_in_upstream() {
        let x = random_tensor(&[4, 5, 2], 3);
        let w = random_tensor(&[3, 3, 2, 3], 4);
        let u = random_tensor(&[4, 5, 3], 5);
        let mut u2 = u.clone();
        u2.scale(-2.5);
        let g1 = conv2d_backward(&x, &w, &u).unwrap();
        let g2 = conv2d_backward(&x, &w, &u2).unwrap();
        for (a, b) in [(&g1.weight, &g2.weight), (&g1.bias, &g2.bias), (&g1.input, &g2.input)] {
            for (p, q) in a.data().iter().zip(b.data()) {
                assert!((q + 2.5 * p).abs() <= 1e-12 * (1.0 + p.abs()));
            }
        }
    }

    #[test]
    fn time_shift_equivariance_in_interior() {
        let x = random_tensor(&[10, 6, 2], 7);
        let w = random_tensor(&[3, 3, 2, 2], 8);
        let b = random_tensor(&[2], 9);
        // shifted[t] = x[t + 1]
        let row = 6 * 2;
        let shifted = Tensor::new(vec![9, 6, 2], x.data()[row..].to_vec()).unwrap();
        let (y, _) = conv2d_forward(&x, &w, &b).unwrap();
        let (ys, _) = conv2d_forward(&shifted, &w, &b).unwrap();
        let orow = 6 * 2;
        for t in 1..8 {
            assert_eq!(&ys.data()[t * orow..(t + 1) * orow], &y.data()[(t + 1) * orow..(t + 2) * orow]);
        }
    }

    #[test]
    fn time_fill_only_touches_edge_frames() {
        let x = random_tensor(&[8, 5, 1], 1);
        let w = random_tensor(&[5, 5, 1, 2], 2);
        let b = Tensor::zeros(&[2]);
        let (a, _) = conv2d_forward(&x, &w, &b).unwrap();
        let (c, _) = conv2d_forward_padded(&x, &w, &b, TimePadding { before: 0.0, after: 10.0 }).unwrap();
        let row = 5 * 2;
        for t in 0..8 {
            let same = a.data()[t * row..(t + 1) * row] == c.data()[t * row..(t + 1) * row];
            assert_eq!(same, t < 6, "frame {t}");
        }
    }
}
