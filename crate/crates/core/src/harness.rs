//! Position sweep: accuracy of the decision read at position `n` of an
//! `N_t`-frame window, as a function of `n`.
//!
//! For a target frame `t` and position `n` the window is frames
//! `[t - n, t - n + N_t)` of the recording. Frames without that much context
//! on either side are skipped, never padded. Every (t, n) pair belongs to
//! exactly one window start `t - n`, so one forward per window start yields
//! the same predictions as evaluating each pair on its own.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ambisonics::FeatureTensor;
use crate::analysis::optimal_position;
use crate::crnn::{feature_window, CrnnParams};
use crate::error::{invalid, shape, Error, Result};
use crate::neuralnet::Scalar;
use crate::roomsim::{FrameLabels, N_CLASSES};

/// Anything that maps a window of frames to one count per frame.
pub trait FramePredictor: Sync {
    /// Counts for frames `[start, start + len)` of recording `index`.
    fn predict(&self, index: usize, features: &FeatureTensor, start: usize, len: usize) -> Result<Vec<u8>>;
}

impl<T: Scalar> FramePredictor for CrnnParams<T> {
    fn predict(&self, _index: usize, features: &FeatureTensor, start: usize, len: usize) -> Result<Vec<u8>> {
        self.predict_counts(&feature_window::<T>(features, start, len)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// `counts[true][predicted]`
    pub counts: [[u64; N_CLASSES]; N_CLASSES],
}

impl Default for ConfusionMatrix {
    fn default() -> Self {
        Self { counts: [[0; N_CLASSES]; N_CLASSES] }
    }
}

impl ConfusionMatrix {
    pub fn add(&mut self, truth: u8, predicted: u8) {
        self.counts[truth as usize][predicted as usize] += 1;
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().flatten().zip(other.counts.iter().flatten()) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..N_CLASSES).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.trace() as f64 / n as f64,
        }
    }
}

/// Frame accuracy and confusion matrix of `preds` against `labels`.
pub fn accuracy_and_confusion(preds: &[u8], labels: &[u8]) -> Result<(f64, ConfusionMatrix)> {
    if preds.len() != labels.len() {
        return shape(format!("{} predictions for {} labels", preds.len(), labels.len()));
    }
    if let Some(v) = preds.iter().chain(labels).find(|v| **v as usize >= N_CLASSES) {
        return invalid(format!("count {v} out of range"));
    }
    let mut m = ConfusionMatrix::default();
    for (p, l) in preds.iter().zip(labels) {
        m.add(*l, *p);
    }
    Ok((m.accuracy(), m))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub n_t: usize,
    /// Positions to evaluate; all of `0..n_t` when `None`.
    #[serde(default)]
    pub positions: Option<Vec<usize>>,
}

impl SweepConfig {
    pub fn new(n_t: usize) -> Self {
        Self { n_t, positions: None }
    }

    pub fn positions(&self) -> Result<Vec<usize>> {
        if self.n_t == 0 {
            return invalid("N_t must be positive");
        }
        let p = self.positions.clone().unwrap_or_else(|| (0..self.n_t).collect());
        if let Some(n) = p.iter().find(|n| **n >= self.n_t) {
            return invalid(format!("position {n} outside 0..{}", self.n_t));
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurvePoint {
    pub n: usize,
    pub accuracy: f64,
    pub evaluated: u64,
    pub skipped: u64,
    pub correct: u64,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub n_t: usize,
    pub points: Vec<SweepCurvePoint>,
    /// Support-weighted mean over positions.
    pub mean_accuracy: f64,
    pub mean_accuracy_unweighted: f64,
    /// Best position; ties go to the smaller `n`.
    pub n_best: usize,
    /// Recordings shorter than `N_t`, left out entirely.
    pub excluded_recordings: usize,
}

impl SweepResult {
    pub fn accuracy_at(&self, n: usize) -> Option<f64> {
        self.points.iter().find(|p| p.n == n).map(|p| p.accuracy)
    }
}

impl SweepResult {
    /// Summary statistics over already tallied points.
    pub fn from_points(n_t: usize, points: Vec<SweepCurvePoint>, excluded: usize) -> Result<SweepResult> {
        summarize(n_t, points, excluded)
    }
}

fn summarize(n_t: usize, points: Vec<SweepCurvePoint>, excluded: usize) -> Result<SweepResult> {
    let evaluated: u64 = points.iter().map(|p| p.evaluated).sum();
    if evaluated == 0 {
        return Err(Error::InvalidArgument("no evaluable frames in the sweep".into()));
    }
    let correct: u64 = points.iter().map(|p| p.correct).sum();
    let supported: Vec<&SweepCurvePoint> = points.iter().filter(|p| p.evaluated > 0).collect();
    let mut best = supported[0];
    for p in &supported {
        if p.accuracy > best.accuracy || (p.accuracy == best.accuracy && p.n < best.n) {
            best = p;
        }
    }
    Ok(SweepResult {
        n_t,
        mean_accuracy: correct as f64 / evaluated as f64,
        mean_accuracy_unweighted: supported.iter().map(|p| p.accuracy).sum::<f64>() / supported.len() as f64,
        n_best: best.n,
        excluded_recordings: excluded,
        points,
    })
}

/// Runs the sweep over `recordings` (features with per-frame labels).
pub fn position_sweep<P: FramePredictor + ?Sized>(
    predictor: &P,
    recordings: &[(FeatureTensor, FrameLabels)],
    cfg: &SweepConfig,
) -> Result<SweepResult> {
    let n_t = cfg.n_t;
    let positions = cfg.positions()?;
    for (i, (f, l)) in recordings.iter().enumerate() {
        if f.n_frames() != l.counts.len() {
            return shape(format!("recording {i}: {} frames, {} labels", f.n_frames(), l.counts.len()));
        }
    }
    let usable: Vec<usize> = (0..recordings.len()).filter(|&i| recordings[i].0.n_frames() >= n_t).collect();
    let jobs: Vec<(usize, usize)> =
        usable.iter().flat_map(|&i| (0..=recordings[i].0.n_frames() - n_t).map(move |s| (i, s))).collect();

    let per_window: Vec<Vec<u8>> = jobs
        .par_iter()
        .map(|&(i, s)| {
            let pred = predictor.predict(i, &recordings[i].0, s, n_t)?;
            if pred.len() != n_t {
                return shape(format!("predictor returned {} counts for {n_t} frames", pred.len()));
            }
            Ok(pred)
        })
        .collect::<Result<_>>()?;

    let candidates: u64 = usable.iter().map(|&i| recordings[i].0.n_frames() as u64).sum();
    let mut points: Vec<SweepCurvePoint> = positions
        .iter()
        .map(|&n| SweepCurvePoint {
            n,
            accuracy: 0.0,
            evaluated: 0,
            skipped: 0,
            correct: 0,
            confusion: ConfusionMatrix::default(),
        })
        .collect();
    for (&(i, s), pred) in jobs.iter().zip(&per_window) {
        let labels = &recordings[i].1.counts;
        for p in &mut points {
            let t = s + p.n;
            let (truth, guess) = (labels[t], pred[p.n]);
            if guess as usize >= N_CLASSES {
                return invalid(format!("predicted count {guess} out of range"));
            }
            p.confusion.add(truth, guess);
            p.evaluated += 1;
            if truth == guess {
                p.correct += 1;
            }
        }
    }
    for p in &mut points {
        p.skipped = candidates - p.evaluated;
        p.accuracy = if p.evaluated > 0 { p.correct as f64 / p.evaluated as f64 } else { 0.0 };
    }
    summarize(n_t, points, recordings.len() - usable.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveFeatures {
    pub kernel: usize,
    pub n_t: usize,
    /// Best accuracy over positions minus accuracy at `n = 0`.
    pub head_rise: f64,
    /// Accuracy at `n_opt` minus accuracy at `N_t - 1`.
    pub tail_drop: Option<f64>,
    pub n_best: usize,
    pub n_opt: Option<usize>,
    /// `n_best - n_opt`
    pub offset: Option<i64>,
    pub best_accuracy: f64,
}

/// Shape statistics of a sweep curve for filter size `kernel`.
pub fn curve_features(result: &SweepResult, kernel: usize) -> Result<CurveFeatures> {
    let n_t = result.n_t;
    let first = result.accuracy_at(0).ok_or_else(|| Error::InvalidArgument("sweep lacks position 0".into()))?;
    let best = result.accuracy_at(result.n_best).expect("n_best is a swept position");
    let n_opt = optimal_position(n_t, kernel);
    let tail_drop = match (n_opt.and_then(|n| result.accuracy_at(n)), result.accuracy_at(n_t - 1)) {
        (Some(a), Some(b)) => Some(a - b),
        _ => None,
    };
    Ok(CurveFeatures {
        kernel,
        n_t,
        head_rise: best - first,
        tail_drop,
        n_best: result.n_best,
        n_opt,
        offset: n_opt.map(|n| result.n_best as i64 - n as i64),
        best_accuracy: best,
    })
}

/// Sweep result for a given per-position accuracy curve, one frame each.
#[doc(hidden)]
pub fn synthetic_result(curve: &[f64]) -> Result<SweepResult> {
    let points = curve
        .iter()
        .enumerate()
        .map(|(n, &a)| SweepCurvePoint {
            n,
            accuracy: a,
            evaluated: 1000,
            skipped: 0,
            correct: (a * 1000.0).round() as u64,
            confusion: ConfusionMatrix::default(),
        })
        .collect();
    summarize(curve.len(), points, 0)
}
