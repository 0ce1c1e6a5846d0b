//! Mini-batch Adam training on mean per-frame cross-entropy.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CrnnParams, SequenceGrads};
use crate::error::{invalid, shape, Error, Result};
use crate::neuralnet::{clip_global_norm, Adam, AdamConfig, Scalar, Tensor};
use crate::seed::{derive_seed, rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Sequences per optimizer step.
    pub batch_size: usize,
    pub seed: u64,
    /// Global-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub adam: AdamConfig,
    /// Compute per-sequence gradients on the rayon pool. Results do not depend on it.
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 10, batch_size: 16, seed: 0, clip_norm: Some(5.0), adam: AdamConfig::default(), parallel: true }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return invalid("batch_size must be positive");
        }
        if !(self.adam.lr > 0.0) || !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) {
            return invalid(format!("bad optimizer settings {:?}", self.adam));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return invalid(format!("clip_norm must be positive, got {c}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-frame cross-entropy over the epoch.
    pub loss: f64,
    /// Per-frame training accuracy over the epoch.
    pub accuracy: f64,
}

/// Training sequences cut as fixed-length windows from longer recordings.
#[derive(Debug, Clone)]
pub struct TrainingSet<T> {
    recordings: Vec<(Tensor<T>, Vec<u8>)>,
    windows: Vec<(usize, usize)>,
    seq_len: usize,
}

impl<T: Scalar> TrainingSet<T> {
    /// Every recording is `[N, F, C]` with `N` frame labels; windows of
    /// `seq_len` frames start every `hop` frames.
    pub fn windowed(recordings: Vec<(Tensor<T>, Vec<u8>)>, seq_len: usize, hop: usize) -> Result<Self> {
        if seq_len == 0 || hop == 0 {
            return invalid("seq_len and hop must be positive");
        }
        let mut windows = Vec::new();
        for (i, (x, labels)) in recordings.iter().enumerate() {
            if x.shape().len() != 3 || x.shape()[0] != labels.len() {
                return shape(format!("recording {i}: features {:?} with {} labels", x.shape(), labels.len()));
            }
            let n = labels.len();
            let mut s = 0;
            while s + seq_len <= n {
                windows.push((i, s));
                s += hop;
            }
        }
        Ok(Self { recordings, windows, seq_len })
    }

    /// Each item is already one training sequence.
    pub fn from_sequences(sequences: Vec<(Tensor<T>, Vec<u8>)>) -> Result<Self> {
        let seq_len = sequences.first().map(|(_, l)| l.len()).unwrap_or(1);
        if sequences.iter().any(|(_, l)| l.len() != seq_len) {
            return shape("sequences must share one length");
        }
        Self::windowed(sequences, seq_len, seq_len)
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    /// Input tensor and labels of window `i`.
    pub fn window(&self, i: usize) -> Result<(Tensor<T>, &[u8])> {
        let (r, s) = self.windows[i];
        let (x, labels) = &self.recordings[r];
        let frame = x.shape()[1] * x.shape()[2];
        let data = x.data()[s * frame..(s + self.seq_len) * frame].to_vec();
        Ok((Tensor::new(vec![self.seq_len, x.shape()[1], x.shape()[2]], data)?, &labels[s..s + self.seq_len]))
    }
}

/// Parameters, optimizer moments and history; enough to resume bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<T> {
    pub params: CrnnParams<T>,
    pub optimizer: Adam<T>,
    /// Completed epochs.
    pub epoch: usize,
    pub history: Vec<EpochStats>,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(params: CrnnParams<T>, adam: AdamConfig) -> Self {
        let optimizer = Adam::new(adam, params.tensors());
        Self { params, optimizer, epoch: 0, history: Vec::new() }
    }
}

/// Trains fresh parameters for `cfg.epochs` epochs.
pub fn train<T: Scalar>(
    params: CrnnParams<T>,
    data: &TrainingSet<T>,
    cfg: &TrainConfig,
) -> Result<TrainState<T>> {
    train_from_state(TrainState::new(params, cfg.adam), data, cfg, |_| Ok(()))
}

/// Continues training until `cfg.epochs` epochs are complete, calling
/// `on_epoch` after each one.
pub fn train_from_state<T: Scalar>(
    mut state: TrainState<T>,
    data: &TrainingSet<T>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&TrainState<T>) -> Result<()>,
) -> Result<TrainState<T>> {
    cfg.validate()?;
    if data.is_empty() {
        return invalid("training set is empty");
    }
    if data.seq_len() != state.params.config.seq_len {
        return shape(format!("windows of {} frames, model expects {}", data.seq_len(), state.params.config.seq_len));
    }
    state.optimizer.config = cfg.adam;
    while state.epoch < cfg.epochs {
        let epoch = state.epoch;
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng(derive_seed(cfg.seed, epoch as u64)));

        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut frames = 0usize;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let params = &state.params;
            let run = |&i: &usize| -> Result<SequenceGrads<T>> {
                let (x, labels) = data.window(i)?;
                params.loss_and_grads(&x, labels)
            };
            let per_seq: Vec<SequenceGrads<T>> = if cfg.parallel {
                batch.par_iter().map(run).collect::<Result<_>>()?
            } else {
                batch.iter().map(run).collect::<Result<_>>()?
            };

            let mut grads: Vec<Tensor<T>> = per_seq[0].grads.iter().map(|g| Tensor::zeros(g.shape())).collect();
            let scale = 1.0 / per_seq.len() as f64;
            for s in &per_seq {
                if !s.loss.is_finite() {
                    return Err(Error::Numeric(format!("non-finite loss in epoch {epoch}, batch {b}")));
                }
                loss_sum += s.loss * s.frames as f64;
                correct += s.correct;
                frames += s.frames;
                for (acc, g) in grads.iter_mut().zip(&s.grads) {
                    acc.add_assign(g);
                }
            }
            grads.iter_mut().for_each(|g| g.scale(T::from_f64_lossy(scale)));
            let norm = match cfg.clip_norm {
                Some(c) => clip_global_norm(&mut grads.iter_mut().collect::<Vec<_>>(), c),
                None => grads.iter().map(|g| g.sum_squares()).sum::<f64>().sqrt(),
            };
            if !norm.is_finite() {
                return Err(Error::Numeric(format!("non-finite gradient in epoch {epoch}, batch {b}")));
            }
            let grad_refs: Vec<&Tensor<T>> = grads.iter().collect();
            state.optimizer.update(&mut state.params.tensors_mut(), &grad_refs)?;
        }
        state.epoch += 1;
        state.history.push(EpochStats {
            epoch: state.epoch,
            loss: loss_sum / frames as f64,
            accuracy: correct as f64 / frames as f64,
        });
        on_epoch(&state)?;
    }
    Ok(state)
}
