//! Dense output layer with softmax and cross-entropy.

use super::tensor::{gemm, Scalar, Tensor};
use crate::error::{invalid, shape, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub input: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseSoftmaxOutput<T> {
    pub probs: Vec<T>,
    pub loss: T,
    /// `probs - target`
    pub logit_grad: Vec<T>,
    pub grads: DenseGrads<T>,
}

/// Max-subtracted softmax of each row of a `[N, C]` buffer, in place.
pub fn softmax_rows<T: Scalar>(logits: &mut [T], classes: usize) {
    for row in logits.chunks_exact_mut(classes) {
        let m = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        let mut z = T::zero();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        row.iter_mut().for_each(|v| *v = *v / z);
    }
}

fn check_dense<T: Scalar>(w: &Tensor<T>, b: &Tensor<T>, h: usize) -> Result<usize> {
    match *w.shape() {
        [wh, c] if wh == h && b.shape() == [c] => Ok(c),
        _ => shape(format!("dense weight {:?} / bias {:?} for input width {h}", w.shape(), b.shape())),
    }
}

/// Single-vector softmax regression step against a one-hot target.
pub fn dense_softmax_xent<T: Scalar>(
    h: &[T],
    w: &Tensor<T>,
    b: &Tensor<T>,
    target: &[T],
) -> Result<DenseSoftmaxOutput<T>> {
    let c = check_dense(w, b, h.len())?;
    if target.len() != c {
        return shape(format!("target has {} entries, expected {c}", target.len()));
    }
    let ones = target.iter().filter(|v| **v == T::one()).count();
    let zeros = target.iter().filter(|v| **v == T::zero()).count();
    if ones != 1 || ones + zeros != c {
        return invalid("target must be one-hot");
    }
    let class = target.iter().position(|v| *v == T::one()).expect("checked above");
    let seq = Tensor::new(vec![1, h.len()], h.to_vec())?;
    let out = sequence_softmax_xent(&seq, w, b, &[class as u8])?;
    let logit_grad = out.probs.data().iter().zip(target).map(|(p, t)| *p - *t).collect();
    Ok(DenseSoftmaxOutput {
        probs: out.probs.into_data(),
        loss: out.loss,
        logit_grad,
        grads: DenseGrads {
            weight: out.grads.weight,
            bias: out.grads.bias,
            input: out.grads.input.reshape(&[h.len()])?,
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceXent<T> {
    /// `[N, C]`
    pub probs: Tensor<T>,
    /// Mean cross-entropy over the `N` rows.
    pub loss: T,
    pub correct: usize,
    /// Gradients of the mean loss.
    pub grads: DenseGrads<T>,
}

/// Per-row dense + softmax + cross-entropy over `[N, H]`, averaged over rows.
pub fn sequence_softmax_xent<T: Scalar>(
    hs: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    targets: &[u8],
) -> Result<SequenceXent<T>> {
    let (n, h) = match *hs.shape() {
        [n, h] => (n, h),
        _ => return shape(format!("dense input must be [N, H], got {:?}", hs.shape())),
    };
    let c = check_dense(w, b, h)?;
    if targets.len() != n {
        return shape(format!("{} targets for {n} rows", targets.len()));
    }
    if let Some(t) = targets.iter().find(|t| **t as usize >= c) {
        return invalid(format!("target class {t} out of range"));
    }
    let mut probs = Vec::with_capacity(n * c);
    for _ in 0..n {
        probs.extend_from_slice(b.data());
    }
    gemm(false, false, n, c, h, hs.data(), w.data(), T::one(), &mut probs);
    softmax_rows(&mut probs, c);

    let scale = T::one() / T::from_f64_lossy(n.max(1) as f64);
    let mut loss = 0.0f64;
    let mut correct = 0;
    let mut dlogits = probs.clone();
    for (r, &t) in targets.iter().enumerate() {
        let row = &probs[r * c..(r + 1) * c];
        let p = row[t as usize].as_f64();
        loss -= if p.is_nan() { p } else { p.max(f64::MIN_POSITIVE).ln() };
        if argmax_lowest(row) == t as usize {
            correct += 1;
        }
        let d = &mut dlogits[r * c..(r + 1) * c];
        d[t as usize] -= T::one();
        d.iter_mut().for_each(|v| *v *= scale);
    }
    let mut dw = vec![T::zero(); h * c];
    gemm(true, false, h, c, n, hs.data(), &dlogits, T::zero(), &mut dw);
    let mut db = vec![T::zero(); c];
    for r in dlogits.chunks_exact(c) {
        db.iter_mut().zip(r).for_each(|(a, b)| *a += *b);
    }
    let mut dh = vec![T::zero(); n * h];
    gemm(false, true, n, h, c, &dlogits, w.data(), T::zero(), &mut dh);
    Ok(SequenceXent {
        probs: Tensor::new(vec![n, c], probs)?,
        loss: T::from_f64_lossy(loss / n.max(1) as f64),
        correct,
        grads: DenseGrads {
            weight: Tensor::new(vec![h, c], dw)?,
            bias: Tensor::new(vec![c], db)?,
            input: Tensor::new(vec![n, h], dh)?,
        },
    })
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax_lowest<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::gradcheck::{grad_check, random_tensor, Differentiable};

    struct XentProbe {
        h: Tensor<f64>,
        w: Tensor<f64>,
        b: Tensor<f64>,
        targets: Vec<u8>,
    }

    impl Differentiable for XentProbe {
        fn arguments(&mut self) -> Vec<&mut [f64]> {
            vec![self.h.data_mut(), self.w.data_mut(), self.b.data_mut()]
        }
        fn forward(&self) -> Tensor<f64> {
            let out = sequence_softmax_xent(&self.h, &self.w, &self.b, &self.targets).unwrap();
            Tensor::new(vec![1], vec![out.loss]).unwrap()
        }
        fn backward(&self, u: &Tensor<f64>) -> Vec<Vec<f64>> {
            let s = u.data()[0];
            let g = sequence_softmax_xent(&self.h, &self.w, &self.b, &self.targets).unwrap().grads;
            [g.input, g.weight, g.bias].into_iter().map(|t| t.data().iter().map(|v| v * s).collect()).collect()
        }
    }

    fn onehot(c: usize) -> Vec<f64> {
        (0..6).map(|i| if i == c { 1.0 } else { 0.0 }).collect()
    }

    #[test]
    fn zero_weights_uniform() {
        let out = dense_softmax_xent(&[0.3; 40], &Tensor::zeros(&[40, 6]), &Tensor::zeros(&[6]), &onehot(2)).unwrap();
        for p in &out.probs {
            assert!((p - 1.0 / 6.0).abs() < 1e-15);
        }
        assert!((out.loss - 6f64.ln()).abs() < 1e-12);
        assert!((out.loss - 1.791759).abs() < 1e-6);
    }

    #[test]
    fn logit_gradient_sums_to_zero() {
        let w = random_tensor(&[40, 6], 1);
        let b = random_tensor(&[6], 2);
        let h = random_tensor(&[40], 3);
        let out = dense_softmax_xent(h.data(), &w, &b, &onehot(4)).unwrap();
        assert!(out.logit_grad.iter().sum::<f64>().abs() < 1e-15);
    }

    #[test]
    fn stable_for_large_logits() {
        let w = Tensor::filled(&[1, 6], 1.0);
        let mut b = Tensor::zeros(&[6]);
        b.data_mut()[0] = 1000.0;
        let out = dense_softmax_xent(&[500.0], &w, &b, &onehot(0)).unwrap();
        assert!(out.loss.is_finite() && out.loss < 1e-12);
    }

    #[test]
    fn non_onehot_rejected() {
        let w = Tensor::<f64>::zeros(&[2, 6]);
        let b = Tensor::zeros(&[6]);
        assert!(dense_softmax_xent(&[0.0, 0.0], &w, &b, &[0.5, 0.5, 0.0, 0.0, 0.0, 0.0]).is_err());
        assert!(dense_softmax_xent(&[0.0, 0.0], &w, &b, &[0.0; 6]).is_err());
        assert!(dense_softmax_xent(&[0.0, 0.0], &w, &b, &[1.0; 5]).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..20 {
            let mut p = XentProbe {
                h: random_tensor(&[1, 40], seed),
                w: random_tensor(&[40, 6], seed + 50),
                b: random_tensor(&[6], seed + 99),
                targets: vec![(seed % 6) as u8],
            };
            let report = grad_check(&mut p, seed, 1e-5);
            assert!(report.max_rel_error < 1e-6, "seed {seed}: {report:?}");
        }
    }

    #[test]
    fn sequence_gradients_match_finite_differences() {
        for seed in 0..5 {
            let mut p = XentProbe {
                h: random_tensor(&[7, 5], seed),
                w: random_tensor(&[5, 6], seed + 1),
                b: random_tensor(&[6], seed + 2),
                targets: (0..7).map(|i| ((i + seed as usize) % 6) as u8).collect(),
            };
            assert!(grad_check(&mut p, seed, 1e-5).max_rel_error < 1e-6);
        }
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax_lowest(&[0.2f64, 0.4, 0.4]), 1);
        assert_eq!(argmax_lowest(&[1.0f64 / 6.0; 6]), 0);
    }
}
