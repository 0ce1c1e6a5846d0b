//! Framing, sine-windowed STFT analysis/synthesis and magnitude spectrograms.
//!
//! Analysis settings are fixed: 16 kHz audio, 1024-sample frames, 512-sample
//! hop, 1024-point real FFT (513 bins). Frame `t` covers samples
//! `[t * hop, t * hop + window_len)`; there is no centering pad and the
//! trailing partial window is dropped.

use std::f64::consts::PI;
use std::sync::Arc;

use realfft::num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Result};

pub const SAMPLE_RATE: u32 = 16_000;
pub const WINDOW_LEN: usize = 1024;
pub const HOP: usize = 512;
pub const N_BINS: usize = WINDOW_LEN / 2 + 1;

/// A mono waveform at 16 kHz.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate != SAMPLE_RATE {
            return invalid(format!("sample rate {sample_rate} Hz, expected {SAMPLE_RATE}"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return invalid(format!("non-finite sample at index {i}"));
        }
        Ok(Self { samples, sample_rate })
    }

    /// 16 kHz clip; panics never, errors on non-finite samples.
    pub fn from_samples(samples: Vec<f64>) -> Result<Self> {
        Self::new(samples, SAMPLE_RATE)
    }

    pub fn zeros(len: usize) -> Self {
        Self { samples: vec![0.0; len], sample_rate: SAMPLE_RATE }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }
}

pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StftConfig {
    pub window_len: usize,
    pub hop: usize,
    pub fft_len: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self { window_len: WINDOW_LEN, hop: HOP, fft_len: WINDOW_LEN }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fft_len != WINDOW_LEN || self.window_len != WINDOW_LEN {
            return invalid(format!(
                "window_len/fft_len must both be {WINDOW_LEN}, got {}/{}",
                self.window_len, self.fft_len
            ));
        }
        if self.hop * 2 != self.window_len {
            return invalid(format!("hop must be half the window, got {}", self.hop));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.fft_len / 2 + 1
    }

    /// Number of complete frames in a signal of `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.window_len {
            0
        } else {
            (len - self.window_len) / self.hop + 1
        }
    }

    /// Center time of frame `t`, in samples.
    pub fn frame_center(&self, t: usize) -> f64 {
        (t * self.hop) as f64 + self.window_len as f64 / 2.0
    }

    pub fn frame_rate(&self) -> f64 {
        SAMPLE_RATE as f64 / self.hop as f64
    }
}

/// `w[i] = sin(pi (i + 0.5) / len)`.
pub fn sine_window(len: usize) -> Result<Vec<f64>> {
    if len < 2 || len % 2 != 0 {
        return invalid(format!("sine window length must be even and >= 2, got {len}"));
    }
    Ok((0..len).map(|i| (PI * (i as f64 + 0.5) / len as f64).sin()).collect())
}

/// Frames x bins complex grid, row-major by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    n_frames: usize,
    bins: Vec<Complex64>,
    config: StftConfig,
}

impl ComplexSpectrogram {
    pub fn new(n_frames: usize, bins: Vec<Complex64>, config: StftConfig) -> Result<Self> {
        config.validate()?;
        if bins.len() != n_frames * config.n_bins() {
            return shape(format!(
                "{} values for {n_frames} frames of {} bins",
                bins.len(),
                config.n_bins()
            ));
        }
        Ok(Self { n_frames, bins, config })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_bins(&self) -> usize {
        self.config.n_bins()
    }

    pub fn config(&self) -> StftConfig {
        self.config
    }

    pub fn frame(&self, t: usize) -> &[Complex64] {
        let nb = self.n_bins();
        &self.bins[t * nb..(t + 1) * nb]
    }

    pub fn bins(&self) -> &[Complex64] {
        &self.bins
    }

    pub fn bins_mut(&mut self) -> &mut [Complex64] {
        &mut self.bins
    }
}

/// Frames x bins non-negative magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct MagSpectrogram {
    n_frames: usize,
    n_bins: usize,
    bins: Vec<f64>,
}

impl MagSpectrogram {
    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.bins[t * self.n_bins..(t + 1) * self.n_bins]
    }

    pub fn values(&self) -> &[f64] {
        &self.bins
    }
}

/// Reusable STFT engine holding the FFT plans and the window.
pub struct Stft {
    config: StftConfig,
    window: Vec<f64>,
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
}

impl Stft {
    pub fn new(config: StftConfig) -> Result<Self> {
        config.validate()?;
        let mut planner = RealFftPlanner::<f64>::new();
        Ok(Self {
            config,
            window: sine_window(config.window_len)?,
            forward: planner.plan_fft_forward(config.fft_len),
            inverse: planner.plan_fft_inverse(config.fft_len),
        })
    }

    pub fn config(&self) -> StftConfig {
        self.config
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    pub fn analyze(&self, samples: &[f64]) -> Result<ComplexSpectrogram> {
        let cfg = self.config;
        if samples.len() < cfg.window_len {
            return invalid(format!(
                "clip of {} samples is shorter than one {}-sample window",
                samples.len(),
                cfg.window_len
            ));
        }
        let n_frames = cfg.frame_count(samples.len());
        let nb = cfg.n_bins();
        let mut bins = vec![Complex64::new(0.0, 0.0); n_frames * nb];
        let mut frame = self.forward.make_input_vec();
        let mut scratch = self.forward.make_scratch_vec();
        for (t, out) in bins.chunks_exact_mut(nb).enumerate() {
            let start = t * cfg.hop;
            for ((f, s), w) in frame.iter_mut().zip(&samples[start..start + cfg.window_len]).zip(&self.window) {
                *f = s * w;
            }
            self.forward
                .process_with_scratch(&mut frame, out, &mut scratch)
                .expect("fft buffer sizes are fixed by the plan");
        }
        ComplexSpectrogram::new(n_frames, bins, cfg)
    }

    /// Sine-windowed overlap-add synthesis. Output length is
    /// `(frames - 1) * hop + window_len`; only samples covered by two frames
    /// reconstruct the analysed signal exactly.
    pub fn synthesize(&self, spec: &ComplexSpectrogram) -> Result<Vec<f64>> {
        let cfg = self.config;
        if spec.config() != cfg {
            return invalid("spectrogram was produced with a different configuration");
        }
        if spec.n_frames() == 0 {
            return Ok(Vec::new());
        }
        let len = (spec.n_frames() - 1) * cfg.hop + cfg.window_len;
        let mut out = vec![0.0; len];
        let mut buf = self.inverse.make_input_vec();
        let mut frame = self.inverse.make_output_vec();
        let mut scratch = self.inverse.make_scratch_vec();
        let norm = 1.0 / cfg.fft_len as f64;
        for t in 0..spec.n_frames() {
            buf.copy_from_slice(spec.frame(t));
            // realfft requires purely real DC and Nyquist bins
            buf[0].im = 0.0;
            let last = buf.len() - 1;
            buf[last].im = 0.0;
            self.inverse
                .process_with_scratch(&mut buf, &mut frame, &mut scratch)
                .expect("fft buffer sizes are fixed by the plan");
            let start = t * cfg.hop;
            for ((o, v), w) in out[start..start + cfg.window_len].iter_mut().zip(&frame).zip(&self.window) {
                *o += v * norm * w;
            }
        }
        Ok(out)
    }
}

pub fn stft(clip: &AudioClip, cfg: StftConfig) -> Result<ComplexSpectrogram> {
    Stft::new(cfg)?.analyze(clip.samples())
}

pub fn istft(spec: &ComplexSpectrogram) -> Result<AudioClip> {
    let samples = Stft::new(spec.config())?.synthesize(spec)?;
    AudioClip::from_samples(samples)
}

pub fn magnitude(spec: &ComplexSpectrogram) -> MagSpectrogram {
    MagSpectrogram {
        n_frames: spec.n_frames(),
        n_bins: spec.n_bins(),
        bins: spec.bins().iter().map(|z| z.norm()).collect(),
    }
}
