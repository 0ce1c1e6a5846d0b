//! The counting network: four "same"-padded convolutions with frequency-only
//! max-pooling after every second one, a sequence-to-sequence LSTM and a
//! per-frame softmax over speaker counts.
//!
//! ```text
//! [N_t, F, 4] -> conv(K, 64) -> conv(K, 32) -> pool_f(p1)
//!             -> conv(K, 128) -> conv(K, 64) -> pool_f(p2)
//!             -> flatten(F' x 64) -> LSTM(40) -> dense(6) -> softmax
//! ```
//!
//! Every convolution is followed by a ReLU.

mod train;

pub use train::{
    train, train_from_state, EpochStats, TrainConfig, TrainState, TrainingSet,
};

use serde::{Deserialize, Serialize};

use crate::ambisonics::FeatureTensor;
use crate::analysis::StackSpec;
use crate::error::{invalid, shape, Error, Result};
use crate::neuralnet::{
    conv2d_forward_padded, glorot_uniform, lstm_backward, lstm_forward, maxpool_freq, maxpool_freq_backward,
    pooled_len, relu_backward, relu_inplace, sequence_softmax_xent, softmax_rows, uniform, Conv2dCache, LstmCache,
    LstmParams, PoolRecord, Scalar, Tensor, TimePadding,
};
use crate::roomsim::N_CLASSES;
use crate::seed::{derive_seed, rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrnnConfig {
    /// Filter support `K` along both time and frequency; odd.
    pub kernel: usize,
    pub conv_channels: Vec<usize>,
    /// One frequency pool per pair of convolutions.
    pub pool_sizes: Vec<usize>,
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
    pub n_classes: usize,
    /// Sequence length `N_t` used for training.
    pub seq_len: usize,
    pub n_bins: usize,
    pub n_channels: usize,
}

impl Default for CrnnConfig {
    fn default() -> Self {
        Self {
            kernel: 3,
            conv_channels: vec![64, 32, 128, 64],
            pool_sizes: vec![4, 4],
            lstm_hidden: 40,
            lstm_layers: 1,
            n_classes: N_CLASSES,
            seq_len: 30,
            n_bins: 513,
            n_channels: 4,
        }
    }
}

impl CrnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kernel % 2 == 0 {
            return invalid(format!("kernel size must be odd, got {}", self.kernel));
        }
        if self.n_classes != N_CLASSES {
            return invalid(format!("n_classes must be {N_CLASSES}, got {}", self.n_classes));
        }
        if self.conv_channels.is_empty() || self.conv_channels.contains(&0) {
            return invalid("conv_channels must be non-empty and positive");
        }
        if self.pool_sizes.len() != self.conv_channels.len() / 2 || self.pool_sizes.contains(&0) {
            return invalid(format!(
                "{} conv layers need {} positive pool sizes, got {:?}",
                self.conv_channels.len(),
                self.conv_channels.len() / 2,
                self.pool_sizes
            ));
        }
        if self.lstm_hidden == 0 || self.lstm_layers == 0 || self.seq_len == 0 || self.n_bins == 0 || self.n_channels == 0
        {
            return invalid("lstm_hidden, lstm_layers, seq_len, n_bins and n_channels must be positive");
        }
        Ok(())
    }

    /// Frequency bins left after all pools.
    pub fn pooled_bins(&self) -> usize {
        self.pool_sizes.iter().fold(self.n_bins, |f, &p| pooled_len(f, p))
    }

    /// Width of the per-frame vector entering the LSTM.
    pub fn lstm_input_width(&self) -> usize {
        self.pooled_bins() * self.conv_channels.last().copied().unwrap_or(0)
    }

    /// Temporal layer stack used by the padding-taint analysis.
    pub fn stack_spec(&self) -> StackSpec {
        StackSpec::conv_stack(self.kernel, self.conv_channels.len())
    }

    /// Closed-form parameter count.
    pub fn parameter_count(&self) -> usize {
        let k2 = self.kernel * self.kernel;
        let mut cin = self.n_channels;
        let mut total = 0;
        for &c in &self.conv_channels {
            total += k2 * cin * c + c;
            cin = c;
        }
        let h = self.lstm_hidden;
        let mut d = self.lstm_input_width();
        for _ in 0..self.lstm_layers {
            total += d * 4 * h + h * 4 * h + 4 * h;
            d = h;
        }
        total + h * self.n_classes + self.n_classes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// All learnable tensors of the network plus the config that shaped them.
#[derive(Debug, Clone, PartialEq)]
pub struct CrnnParams<T> {
    pub config: CrnnConfig,
    pub convs: Vec<ConvLayer<T>>,
    pub lstms: Vec<LstmParams<T>>,
    pub dense_weight: Tensor<T>,
    pub dense_bias: Tensor<T>,
}

/// Seeded initialization: Glorot-uniform convolutions, LSTM input weights
/// and dense layer; recurrent weights uniform in `+-1/sqrt(H)`; forget-gate
/// bias 1, all other biases 0.
pub fn build<T: Scalar>(config: &CrnnConfig, seed: u64) -> Result<CrnnParams<T>> {
    config.validate()?;
    let k = config.kernel;
    let mut r = rng(derive_seed(seed, 0x696e_6974));
    let mut convs = Vec::new();
    let mut cin = config.n_channels;
    for &c in &config.conv_channels {
        convs.push(ConvLayer {
            weight: glorot_uniform(&[k, k, cin, c], k * k * cin, k * k * c, &mut r),
            bias: Tensor::zeros(&[c]),
        });
        cin = c;
    }
    let h = config.lstm_hidden;
    let mut lstms = Vec::new();
    let mut d = config.lstm_input_width();
    for _ in 0..config.lstm_layers {
        let mut bias = Tensor::zeros(&[4 * h]);
        bias.data_mut()[h..2 * h].iter_mut().for_each(|v| *v = T::one());
        lstms.push(LstmParams {
            w_input: glorot_uniform(&[d, 4 * h], d, 4 * h, &mut r),
            w_hidden: uniform(&[h, 4 * h], 1.0 / (h as f64).sqrt(), &mut r),
            bias,
        });
        d = h;
    }
    Ok(CrnnParams {
        config: config.clone(),
        convs,
        lstms,
        dense_weight: glorot_uniform(&[h, config.n_classes], h, config.n_classes, &mut r),
        dense_bias: Tensor::zeros(&[config.n_classes]),
    })
}

/// Intermediate state kept for the backward pass.
struct ForwardCache<T> {
    convs: Vec<(Conv2dCache<T>, Tensor<T>)>,
    pools: Vec<PoolRecord>,
    conv_out_shape: Vec<usize>,
    lstms: Vec<(LstmCache<T>, Tensor<T>)>,
}

/// Loss, accuracy and gradients (in [`CrnnParams::tensors`] order) for one sequence.
#[derive(Debug, Clone)]
pub struct SequenceGrads<T> {
    pub loss: f64,
    pub correct: usize,
    pub frames: usize,
    pub grads: Vec<Tensor<T>>,
}

impl<T: Scalar> CrnnParams<T> {
    /// Parameter tensors with stable names, in serialization order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (i, c) in self.convs.iter().enumerate() {
            out.push((format!("conv{i}.weight"), &c.weight));
            out.push((format!("conv{i}.bias"), &c.bias));
        }
        for (i, l) in self.lstms.iter().enumerate() {
            out.push((format!("lstm{i}.w_input"), &l.w_input));
            out.push((format!("lstm{i}.w_hidden"), &l.w_hidden));
            out.push((format!("lstm{i}.bias"), &l.bias));
        }
        out.push(("dense.weight".to_string(), &self.dense_weight));
        out.push(("dense.bias".to_string(), &self.dense_bias));
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        self.named_tensors().into_iter().map(|(_, t)| t).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for c in &mut self.convs {
            out.push(&mut c.weight);
            out.push(&mut c.bias);
        }
        for l in &mut self.lstms {
            out.push(&mut l.w_input);
            out.push(&mut l.w_hidden);
            out.push(&mut l.bias);
        }
        out.push(&mut self.dense_weight);
        out.push(&mut self.dense_bias);
        out
    }

    /// Rebuilds parameters from named tensors, checking every shape against `config`.
    pub fn from_named(config: &CrnnConfig, mut tensors: Vec<(String, Tensor<T>)>) -> Result<Self> {
        let mut params = build::<T>(config, 0)?;
        let expected: Vec<(String, Vec<usize>)> =
            params.named_tensors().into_iter().map(|(n, t)| (n, t.shape().to_vec())).collect();
        if tensors.len() != expected.len() {
            return Err(Error::Format(format!("{} tensors, model needs {}", tensors.len(), expected.len())));
        }
        for (slot, (name, shape_)) in params.tensors_mut().into_iter().zip(expected) {
            let pos = tensors
                .iter()
                .position(|(n, _)| *n == name)
                .ok_or_else(|| Error::Format(format!("missing tensor {name}")))?;
            let (_, t) = tensors.swap_remove(pos);
            if t.shape() != shape_.as_slice() {
                return Err(Error::Format(format!("tensor {name} has shape {:?}, expected {shape_:?}", t.shape())));
            }
            *slot = t;
        }
        Ok(params)
    }

    pub fn cast<U: Scalar>(&self) -> CrnnParams<U> {
        CrnnParams {
            config: self.config.clone(),
            convs: self.convs.iter().map(|c| ConvLayer { weight: c.weight.cast(), bias: c.bias.cast() }).collect(),
            lstms: self
                .lstms
                .iter()
                .map(|l| LstmParams { w_input: l.w_input.cast(), w_hidden: l.w_hidden.cast(), bias: l.bias.cast() })
                .collect(),
            dense_weight: self.dense_weight.cast(),
            dense_bias: self.dense_bias.cast(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<usize> {
        let c = &self.config;
        match *x.shape() {
            [nt, f, ch] if f == c.n_bins && ch == c.n_channels && nt > 0 => Ok(nt),
            _ => shape(format!("input {:?}, expected [N_t, {}, {}]", x.shape(), c.n_bins, c.n_channels)),
        }
    }

    /// Convolution stack up to (and including) the last pool, flattened to
    /// `[N_t, F' * C]`: the sequence entering the LSTM.
    pub fn conv_features(&self, x: &Tensor<T>, pad: TimePadding) -> Result<Tensor<T>> {
        Ok(self.conv_stack(x, pad, false)?.0)
    }

    fn conv_stack(&self, x: &Tensor<T>, pad: TimePadding, keep: bool) -> Result<(Tensor<T>, ForwardCache<T>)> {
        let nt = self.check_input(x)?;
        let mut cache = ForwardCache { convs: Vec::new(), pools: Vec::new(), conv_out_shape: Vec::new(), lstms: Vec::new() };
        let mut a = x.clone();
        for (i, layer) in self.convs.iter().enumerate() {
            let (mut y, cc) = conv2d_forward_padded(&a, &layer.weight, &layer.bias, pad)?;
            relu_inplace(&mut y);
            if keep {
                cache.convs.push((cc, y.clone()));
            }
            a = y;
            if i % 2 == 1 {
                let (p, rec) = maxpool_freq(&a, self.config.pool_sizes[i / 2])?;
                if keep {
                    cache.pools.push(rec);
                }
                a = p;
            }
        }
        cache.conv_out_shape = a.shape().to_vec();
        let width = a.len() / nt;
        Ok((a.reshape(&[nt, width])?, cache))
    }

    fn logits_cached(&self, x: &Tensor<T>, keep: bool) -> Result<(Tensor<T>, ForwardCache<T>)> {
        let (mut seq, mut cache) = self.conv_stack(x, TimePadding::ZERO, keep)?;
        for l in &self.lstms {
            let (hs, lc) = lstm_forward(&seq, l)?;
            if keep {
                cache.lstms.push((lc, seq));
            }
            seq = hs;
        }
        Ok((seq, cache))
    }

    /// Per-frame class probabilities, `[N_t, n_classes]`.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (hs, _) = self.logits_cached(x, false)?;
        let nt = hs.shape()[0];
        let c = self.config.n_classes;
        let mut logits = Vec::with_capacity(nt * c);
        for _ in 0..nt {
            logits.extend_from_slice(self.dense_bias.data());
        }
        crate::neuralnet::gemm(false, false, nt, c, self.config.lstm_hidden, hs.data(), self.dense_weight.data(), T::one(), &mut logits);
        softmax_rows(&mut logits, c);
        Tensor::new(vec![nt, c], logits)
    }

    /// Per-frame argmax of [`forward`](Self::forward).
    pub fn predict_counts(&self, x: &Tensor<T>) -> Result<Vec<u8>> {
        Ok(predict_from_probs(&self.forward(x)?))
    }

    /// Mean per-frame cross-entropy against `labels` and its exact gradient.
    pub fn loss_and_grads(&self, x: &Tensor<T>, labels: &[u8]) -> Result<SequenceGrads<T>> {
        let (hs, mut cache) = self.logits_cached(x, true)?;
        let out = sequence_softmax_xent(&hs, &self.dense_weight, &self.dense_bias, labels)?;
        let frames = labels.len();

        let mut lstm_grads = Vec::new();
        let mut up = out.grads.input;
        for (l, (lc, _)) in self.lstms.iter().zip(&cache.lstms).rev() {
            let g = lstm_backward(lc, l, &up)?;
            up = g.input;
            lstm_grads.push((g.w_input, g.w_hidden, g.bias));
        }
        lstm_grads.reverse();

        let mut up = up.reshape(&cache.conv_out_shape)?;
        let mut conv_grads = Vec::new();
        for i in (0..self.convs.len()).rev() {
            if i % 2 == 1 {
                let rec = cache.pools.pop().expect("one pool record per pair");
                up = maxpool_freq_backward(&rec, &up)?;
            }
            let (cc, y) = cache.convs.pop().expect("one cache per conv");
            let dy = relu_backward(&y, &up)?;
            let g = cc.backward(&self.convs[i].weight, &dy)?;
            up = g.input;
            conv_grads.push((g.weight, g.bias));
        }
        conv_grads.reverse();

        let mut grads = Vec::new();
        for (w, b) in conv_grads {
            grads.push(w);
            grads.push(b);
        }
        for (a, b, c) in lstm_grads {
            grads.push(a);
            grads.push(b);
            grads.push(c);
        }
        grads.push(out.grads.weight);
        grads.push(out.grads.bias);
        Ok(SequenceGrads { loss: out.loss.as_f64(), correct: out.correct, frames, grads })
    }
}

/// Per-row argmax, ties broken toward the smaller count.
pub fn predict_from_probs<T: Scalar>(probs: &Tensor<T>) -> Vec<u8> {
    let c = probs.shape()[1];
    probs.data().chunks_exact(c).map(|row| crate::neuralnet::argmax_lowest(row) as u8).collect()
}

/// Frames `[start, start + len)` of a feature tensor as a network input.
pub fn feature_window<T: Scalar>(features: &FeatureTensor, start: usize, len: usize) -> Result<Tensor<T>> {
    if start + len > features.n_frames() {
        return shape(format!("window [{start}, {}) exceeds {} frames", start + len, features.n_frames()));
    }
    let data = features.frames(start, len).iter().map(|v| T::from_f64_lossy(*v)).collect();
    Tensor::new(vec![len, features.n_bins(), features.n_channels()], data)
}

#[cfg(test)]
mod tests;
