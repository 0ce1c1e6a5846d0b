//! Which frames of an `N_t`-frame window depend on the convolutions' zero
//! padding, and where the last clean decoding position sits.
//!
//! A "same" convolution of odd support `K` reads `K/2` frames on each side,
//! so every conv layer spreads the out-of-range (void) frames `K/2` further
//! into the window. Pooling along frequency leaves the time axis alone and the
//! LSTM only receives taint, so for four conv layers
//!
//! ```text
//! head = tail = 4 * (K / 2) = 2(K - 1)
//! n_opt = N_t - 1 - tail = N_t - 2K + 1
//! ```

use serde::{Deserialize, Serialize};

use crate::crnn::CrnnParams;
use crate::error::{invalid, Result};
use crate::neuralnet::{Scalar, Tensor, TimePadding};
use crate::seed::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerDesc {
    /// "Same"-padded convolution with `kernel / 2` frames of time padding.
    Conv { kernel: usize },
    PoolFreq,
    Recurrent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackSpec {
    pub layers: Vec<LayerDesc>,
}

impl StackSpec {
    /// `depth` convs of support `kernel`, a pool after every second one, then the LSTM.
    pub fn conv_stack(kernel: usize, depth: usize) -> Self {
        let mut layers = Vec::new();
        for i in 0..depth {
            layers.push(LayerDesc::Conv { kernel });
            if i % 2 == 1 {
                layers.push(LayerDesc::PoolFreq);
            }
        }
        layers.push(LayerDesc::Recurrent);
        Self { layers }
    }

    pub fn validate(&self) -> Result<()> {
        for l in &self.layers {
            if let LayerDesc::Conv { kernel } = l {
                if kernel % 2 == 0 {
                    return invalid(format!("conv kernel must be odd, got {kernel}"));
                }
            }
        }
        Ok(())
    }

    /// Half-widths of the conv layers feeding the recurrent layer.
    fn halos(&self) -> impl Iterator<Item = usize> + '_ {
        self.layers
            .iter()
            .take_while(|l| **l != LayerDesc::Recurrent)
            .filter_map(|l| match l {
                LayerDesc::Conv { kernel } => Some(kernel / 2),
                _ => None,
            })
    }

    /// Temporal receptive field of one pre-LSTM feature frame.
    pub fn receptive_field(&self) -> usize {
        1 + 2 * self.halos().sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaintMask {
    pub head: usize,
    pub tail: usize,
    /// `true` where the pre-LSTM features depend on padding.
    pub per_frame: Vec<bool>,
}

impl TaintMask {
    fn from_sides(left: &[bool], right: &[bool]) -> Self {
        Self {
            head: left.iter().filter(|v| **v).count(),
            tail: right.iter().filter(|v| **v).count(),
            per_frame: left.iter().zip(right).map(|(a, b)| *a || *b).collect(),
        }
    }

    pub fn n_frames(&self) -> usize {
        self.per_frame.len()
    }

    pub fn is_clean(&self, n: usize) -> bool {
        !self.per_frame[n]
    }
}

/// Spreads taint from one side of the window through every conv layer.
fn propagate(stack: &StackSpec, n_t: usize, from_left: bool) -> Vec<bool> {
    let n = n_t as isize;
    let mut tainted = vec![false; n_t];
    for r in stack.halos() {
        let r = r as isize;
        let prev = tainted.clone();
        for t in 0..n {
            let hit = (t - r..=t + r).any(|u| {
                if u < 0 {
                    from_left
                } else if u >= n {
                    !from_left
                } else {
                    prev[u as usize]
                }
            });
            tainted[t as usize] = hit;
        }
    }
    tainted
}

/// Analytic taint mask for an `n_t`-frame window.
pub fn taint_mask(stack: &StackSpec, n_t: usize) -> Result<TaintMask> {
    stack.validate()?;
    if n_t == 0 {
        return invalid("N_t must be at least 1");
    }
    Ok(TaintMask::from_sides(&propagate(stack, n_t, true), &propagate(stack, n_t, false)))
}

/// Last padding-free decoding position `N_t - 2K + 1`, or `None` when the
/// window is too short to have one.
pub fn optimal_position(n_t: usize, kernel: usize) -> Option<usize> {
    if kernel == 0 || n_t + 1 <= 2 * kernel {
        return None;
    }
    Some(n_t + 1 - 2 * kernel)
}

/// Look-ahead frames needed to decode at the optimal position: `4 * (K / 2)`.
pub fn overhead_frames(kernel: usize) -> usize {
    4 * (kernel / 2)
}

/// Fill value substituted for the zero padding when probing.
pub const PROBE_FILL: f64 = 10.0;

/// Measures the taint mask of a real conv stack: each random probe window
/// is run with zero padding and with [`PROBE_FILL`] padding on one side at a
/// time; frames whose pre-LSTM features move by more than `1e-9` are tainted.
pub fn empirical_taint<T: Scalar>(params: &CrnnParams<T>, n_t: usize, probes: usize, seed: u64) -> Result<TaintMask> {
    if n_t == 0 || probes == 0 {
        return invalid("N_t and probes must be positive");
    }
    let cfg = &params.config;
    let mut left = vec![false; n_t];
    let mut right = vec![false; n_t];
    let mut r = rng(seed);
    for _ in 0..probes {
        let x: Tensor<T> = crate::neuralnet::uniform(&[n_t, cfg.n_bins, cfg.n_channels], 1.0, &mut r);
        let base = params.conv_features(&x, TimePadding::ZERO)?;
        let width = base.shape()[1];
        for (pad, mask) in [
            (TimePadding { before: PROBE_FILL, after: 0.0 }, &mut left),
            (TimePadding { before: 0.0, after: PROBE_FILL }, &mut right),
        ] {
            let alt = params.conv_features(&x, pad)?;
            for (t, m) in mask.iter_mut().enumerate() {
                let a = &base.data()[t * width..(t + 1) * width];
                let b = &alt.data()[t * width..(t + 1) * width];
                if a.iter().zip(b).any(|(p, q)| (p.as_f64() - q.as_f64()).abs() > 1e-9) {
                    *m = true;
                }
            }
        }
    }
    Ok(TaintMask::from_sides(&left, &right))
}
