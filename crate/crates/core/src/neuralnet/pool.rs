//! Max-pooling along the frequency axis only; time is untouched.

use super::tensor::{Scalar, Tensor};
use crate::error::{invalid, shape, Result};

/// Output bins for `n_bins` inputs; a ragged final group is pooled.
pub fn pooled_len(n_bins: usize, pool: usize) -> usize {
    n_bins.div_ceil(pool)
}

/// Winning input bin for every output element.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolRecord {
    in_shape: [usize; 3],
    argmax: Vec<u32>,
}

pub fn maxpool_freq<T: Scalar>(x: &Tensor<T>, pool: usize) -> Result<(Tensor<T>, PoolRecord)> {
    if pool < 1 {
        return invalid("pool size must be at least 1");
    }
    let [nt, nf, c] = match *x.shape() {
        [a, b, c] => [a, b, c],
        _ => return shape(format!("pool input must be [T, F, C], got {:?}", x.shape())),
    };
    let of = pooled_len(nf, pool);
    let mut out = vec![T::zero(); nt * of * c];
    let mut argmax = vec![0u32; nt * of * c];
    let xd = x.data();
    for t in 0..nt {
        for g in 0..of {
            let lo = g * pool;
            let hi = (lo + pool).min(nf);
            for ch in 0..c {
                let mut best = lo;
                let mut best_v = xd[(t * nf + lo) * c + ch];
                for f in lo + 1..hi {
                    let v = xd[(t * nf + f) * c + ch];
                    // strict comparison keeps the lowest bin on ties
                    if v > best_v {
                        best_v = v;
                        best = f;
                    }
                }
                let o = (t * of + g) * c + ch;
                out[o] = best_v;
                argmax[o] = best as u32;
            }
        }
    }
    Ok((Tensor::new(vec![nt, of, c], out)?, PoolRecord { in_shape: [nt, nf, c], argmax }))
}

/// Routes each upstream value to the bin that won the forward max.
pub fn maxpool_freq_backward<T: Scalar>(record: &PoolRecord, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    let [nt, nf, c] = record.in_shape;
    if upstream.len() != record.argmax.len() {
        return shape(format!("pool upstream has {} values, expected {}", upstream.len(), record.argmax.len()));
    }
    let of = upstream.len() / (nt * c).max(1);
    let mut dx = Tensor::zeros(&[nt, nf, c]);
    let d = dx.data_mut();
    for (o, (&f, &u)) in record.argmax.iter().zip(upstream.data()).enumerate() {
        let t = o / (of * c);
        let ch = o % c;
        d[(t * nf + f as usize) * c + ch] += u;
    }
    Ok(dx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::gradcheck::{grad_check, Differentiable};
    use rand::seq::SliceRandom;

    struct PoolProbe {
        x: Tensor<f64>,
        pool: usize,
    }

    impl Differentiable for PoolProbe {
        fn arguments(&mut self) -> Vec<&mut [f64]> {
            vec![self.x.data_mut()]
        }
        fn forward(&self) -> Tensor<f64> {
            maxpool_freq(&self.x, self.pool).unwrap().0
        }
        fn backward(&self, u: &Tensor<f64>) -> Vec<Vec<f64>> {
            let (_, rec) = maxpool_freq(&self.x, self.pool).unwrap();
            vec![maxpool_freq_backward(&rec, u).unwrap().into_data()]
        }
    }

    /// Distinct values spaced 0.01 apart, so no eps-perturbation flips a max.
    fn untied(shape: &[usize], seed: u64) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        let mut v: Vec<f64> = (0..n).map(|i| i as f64 * 0.01 - 0.3).collect();
        v.shuffle(&mut crate::seed::rng(seed));
        Tensor::new(shape.to_vec(), v).unwrap()
    }

    #[test]
    fn pool_one_is_identity() {
        let x = untied(&[3, 5, 2], 0);
        assert_eq!(maxpool_freq(&x, 1).unwrap().0, x);
    }

    #[test]
    fn ragged_row() {
        let x = Tensor::new(vec![1, 5, 1], vec![1.0, 4.0, 2.0, 2.0, 7.0]).unwrap();
        let (y, rec) = maxpool_freq(&x, 2).unwrap();
        assert_eq!(y.data(), &[4.0, 2.0, 7.0]);
        // tie between bins 2 and 3 resolves to bin 2
        assert_eq!(rec.argmax, vec![1, 2, 4]);
    }

    #[test]
    fn default_shape_chain() {
        assert_eq!(pooled_len(513, 4), 129);
        assert_eq!(pooled_len(129, 4), 33);
        assert!(maxpool_freq(&Tensor::<f64>::zeros(&[1, 2, 1]), 0).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..20 {
            let mut p = PoolProbe { x: untied(&[3, 7, 2], seed), pool: 1 + (seed as usize % 4) };
            let report = grad_check(&mut p, seed, 1e-5);
            assert!(report.max_rel_error < 1e-6, "seed {seed}: {report:?}");
        }
    }

    #[test]
    fn gradient_only_at_selected_bins() {
        let x = untied(&[2, 9, 3], 4);
        let (y, rec) = maxpool_freq(&x, 4).unwrap();
        let dx = maxpool_freq_backward(&rec, &Tensor::filled(y.shape(), 1.0)).unwrap();
        let nonzero = dx.data().iter().filter(|v| **v != 0.0).count();
        assert_eq!(nonzero, y.len());
        for (i, g) in dx.data().iter().enumerate() {
            if *g != 0.0 {
                assert!(y.data().contains(&x.data()[i]));
            }
        }
    }
}
