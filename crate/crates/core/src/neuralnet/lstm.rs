//! Unidirectional sequence-to-sequence LSTM with backpropagation through time.
//!
//! Gate blocks are laid out `[input, forget, cell, output]`, each `H` wide:
//!
//! ```text
//! a_t = x_t Wx + h_{t-1} Wh + b
//! i, f, o = sigmoid(a_i), sigmoid(a_f), sigmoid(a_o);  g = tanh(a_g)
//! c_t = f * c_{t-1} + i * g
//! h_t = o * tanh(c_t)
//! ```
//!
//! Initial states are zero.

use super::tensor::{gemm, Scalar, Tensor};
use crate::error::{shape, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams<T> {
    /// `[D, 4H]`
    pub w_input: Tensor<T>,
    /// `[H, 4H]`
    pub w_hidden: Tensor<T>,
    /// `[4H]`
    pub bias: Tensor<T>,
}

impl<T: Scalar> LstmParams<T> {
    pub fn hidden(&self) -> usize {
        self.w_hidden.shape()[0]
    }

    pub fn input_dim(&self) -> usize {
        self.w_input.shape()[0]
    }

    fn check(&self) -> Result<()> {
        let h = self.hidden();
        if self.w_hidden.shape() != [h, 4 * h] || self.w_input.shape().len() != 2 || self.w_input.shape()[1] != 4 * h
            || self.bias.shape() != [4 * h]
        {
            return shape(format!(
                "inconsistent LSTM params: Wx {:?}, Wh {:?}, b {:?}",
                self.w_input.shape(),
                self.w_hidden.shape(),
                self.bias.shape()
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LstmCache<T> {
    input: Tensor<T>,
    /// Post-activation gates `[T, 4H]`.
    gates: Vec<T>,
    cells: Vec<T>,
    tanh_cells: Vec<T>,
    hidden: Vec<T>,
    h: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmGrads<T> {
    pub w_input: Tensor<T>,
    pub w_hidden: Tensor<T>,
    pub bias: Tensor<T>,
    pub input: Tensor<T>,
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Returns the hidden state at every step, `[T, H]`.
pub fn lstm_forward<T: Scalar>(seq: &Tensor<T>, p: &LstmParams<T>) -> Result<(Tensor<T>, LstmCache<T>)> {
    p.check()?;
    let (nt, d) = match *seq.shape() {
        [nt, d] => (nt, d),
        _ => return shape(format!("LSTM input must be [T, D], got {:?}", seq.shape())),
    };
    if d != p.input_dim() {
        return shape(format!("LSTM input width {d}, params expect {}", p.input_dim()));
    }
    let h = p.hidden();
    let g4 = 4 * h;
    let mut gates = Vec::with_capacity(nt * g4);
    for _ in 0..nt {
        gates.extend_from_slice(p.bias.data());
    }
    gemm(false, false, nt, g4, d, seq.data(), p.w_input.data(), T::one(), &mut gates);

    let mut cells = vec![T::zero(); nt * h];
    let mut tanh_cells = vec![T::zero(); nt * h];
    let mut hidden = vec![T::zero(); nt * h];
    for t in 0..nt {
        if t > 0 {
            let prev = &hidden[(t - 1) * h..t * h];
            gemm(false, false, 1, g4, h, prev, p.w_hidden.data(), T::one(), &mut gates[t * g4..(t + 1) * g4]);
        }
        let a = &mut gates[t * g4..(t + 1) * g4];
        for j in 0..h {
            a[j] = sigmoid(a[j]);
            a[h + j] = sigmoid(a[h + j]);
            a[2 * h + j] = a[2 * h + j].tanh();
            a[3 * h + j] = sigmoid(a[3 * h + j]);
        }
        for j in 0..h {
            let c_prev = if t > 0 { cells[(t - 1) * h + j] } else { T::zero() };
            let c = a[h + j] * c_prev + a[j] * a[2 * h + j];
            cells[t * h + j] = c;
            let tc = c.tanh();
            tanh_cells[t * h + j] = tc;
            hidden[t * h + j] = a[3 * h + j] * tc;
        }
    }
    let out = Tensor::new(vec![nt, h], hidden.clone())?;
    Ok((out, LstmCache { input: seq.clone(), gates, cells, tanh_cells, hidden, h }))
}

/// Backpropagation through time for upstream `[T, H]`.
pub fn lstm_backward<T: Scalar>(cache: &LstmCache<T>, p: &LstmParams<T>, upstream: &Tensor<T>) -> Result<LstmGrads<T>> {
    let h = cache.h;
    let g4 = 4 * h;
    let nt = cache.input.shape()[0];
    let d = cache.input.shape()[1];
    if upstream.shape() != [nt, h] {
        return shape(format!("LSTM upstream {:?}, expected [{nt}, {h}]", upstream.shape()));
    }
    let mut d_pre = vec![T::zero(); nt * g4];
    let mut dh_next = vec![T::zero(); h];
    let mut dc_next = vec![T::zero(); h];
    let one = T::one();
    for t in (0..nt).rev() {
        let a = &cache.gates[t * g4..(t + 1) * g4];
        let da = &mut d_pre[t * g4..(t + 1) * g4];
        for j in 0..h {
            let (i, f, g, o) = (a[j], a[h + j], a[2 * h + j], a[3 * h + j]);
            let tc = cache.tanh_cells[t * h + j];
            let dh = upstream.data()[t * h + j] + dh_next[j];
            let dc = dh * o * (one - tc * tc) + dc_next[j];
            let c_prev = if t > 0 { cache.cells[(t - 1) * h + j] } else { T::zero() };
            da[j] = dc * g * i * (one - i);
            da[h + j] = dc * c_prev * f * (one - f);
            da[2 * h + j] = dc * i * (one - g * g);
            da[3 * h + j] = dh * tc * o * (one - o);
            dc_next[j] = dc * f;
        }
        gemm(false, true, 1, h, g4, da, p.w_hidden.data(), T::zero(), &mut dh_next);
    }

    let mut dwx = vec![T::zero(); d * g4];
    gemm(true, false, d, g4, nt, cache.input.data(), &d_pre, T::zero(), &mut dwx);
    let mut dwh = vec![T::zero(); h * g4];
    if nt > 1 {
        // h_{t-1} pairs with the gate gradient of step t
        gemm(true, false, h, g4, nt - 1, &cache.hidden[..(nt - 1) * h], &d_pre[g4..], T::zero(), &mut dwh);
    }
    let mut db = vec![T::zero(); g4];
    for r in d_pre.chunks_exact(g4) {
        db.iter_mut().zip(r).for_each(|(a, b)| *a += *b);
    }
    let mut dx = vec![T::zero(); nt * d];
    gemm(false, true, nt, d, g4, &d_pre, p.w_input.data(), T::zero(), &mut dx);
    Ok(LstmGrads {
        w_input: Tensor::new(vec![d, g4], dwx)?,
        w_hidden: Tensor::new(vec![h, g4], dwh)?,
        bias: Tensor::new(vec![g4], db)?,
        input: Tensor::new(vec![nt, d], dx)?,
    })
}
