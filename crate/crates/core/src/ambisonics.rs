//! First-order Ambisonics encoding (N3D, channel order W, X, Y, Z) and the
//! stacked magnitude feature tensor fed to the network.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::dsp::{AudioClip, Stft, StftConfig, SAMPLE_RATE};
use crate::error::{invalid, shape, Result};

pub const N_CHANNELS: usize = 4;

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Azimuth in `[-pi, pi)`, elevation in `[-pi/2, pi/2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    azimuth: f64,
    elevation: f64,
}

fn wrap_pi(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w >= PI {
        w - 2.0 * PI
    } else {
        w
    }
}

impl Direction {
    /// Normalizes arbitrary angles. Elevations past a pole fold back over it
    /// and rotate the azimuth by pi.
    pub fn new(azimuth: f64, elevation: f64) -> Self {
        let mut az = azimuth;
        let mut el = wrap_pi(elevation);
        if el > FRAC_PI_2 {
            el = PI - el;
            az += PI;
        } else if el < -FRAC_PI_2 {
            el = -PI - el;
            az += PI;
        }
        Self { azimuth: wrap_pi(az), elevation: el }
    }

    /// Direction of a non-zero vector.
    pub fn from_vector(v: [f64; 3]) -> Result<Self> {
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return invalid("direction of a zero or non-finite vector");
        }
        let el = (v[2] / norm).clamp(-1.0, 1.0).asin();
        Ok(Self::new(v[1].atan2(v[0]), el))
    }

    pub fn azimuth(&self) -> f64 {
        self.azimuth
    }

    pub fn elevation(&self) -> f64 {
        self.elevation
    }
}

/// FOA gains `[W, X, Y, Z]` of a plane wave.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteeringVector {
    pub gains: [f64; 4],
}

pub fn steering_vector(dir: Direction) -> SteeringVector {
    let (st, ct) = dir.azimuth.sin_cos();
    let (sp, cp) = dir.elevation.sin_cos();
    SteeringVector { gains: [1.0, SQRT3 * ct * cp, SQRT3 * st * cp, SQRT3 * sp] }
}

/// Four equal-length channels at 16 kHz in W, X, Y, Z order.
#[derive(Debug, Clone, PartialEq)]
pub struct FoaSignal {
    channels: [Vec<f64>; 4],
}

impl FoaSignal {
    pub fn new(channels: [Vec<f64>; 4]) -> Result<Self> {
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return invalid("FOA channels differ in length");
        }
        if channels.iter().flatten().any(|v| !v.is_finite()) {
            return invalid("non-finite FOA sample");
        }
        Ok(Self { channels })
    }

    pub fn zeros(len: usize) -> Self {
        Self { channels: std::array::from_fn(|_| vec![0.0; len]) }
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.channels[c]
    }

    pub fn channels(&self) -> &[Vec<f64>; 4] {
        &self.channels
    }

    pub(crate) fn channels_mut(&mut self) -> &mut [Vec<f64>; 4] {
        &mut self.channels
    }

    pub fn channel_clip(&self, c: usize) -> AudioClip {
        AudioClip::from_samples(self.channels[c].clone()).expect("FOA samples are finite")
    }

    /// `self += gain * other`, sample-wise.
    pub fn add_scaled(&mut self, other: &FoaSignal, gain: f64) -> Result<()> {
        if other.len() != self.len() {
            return shape("FOA length mismatch in add");
        }
        for (a, b) in self.channels.iter_mut().zip(&other.channels) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += gain * y);
        }
        Ok(())
    }

    pub fn scale(&mut self, gain: f64) {
        self.channels.iter_mut().flatten().for_each(|x| *x *= gain);
    }
}

/// Frequency-independent gains, so time-domain scaling is exact.
pub fn encode_plane_wave(clip: &AudioClip, dir: Direction) -> FoaSignal {
    let g = steering_vector(dir).gains;
    FoaSignal { channels: std::array::from_fn(|c| clip.samples().iter().map(|s| g[c] * s).collect()) }
}

/// `N_t x F x I` magnitudes, stored frame-major then bin then channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    n_frames: usize,
    n_bins: usize,
    data: Vec<f64>,
}

impl FeatureTensor {
    pub fn new(n_frames: usize, n_bins: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_frames * n_bins * N_CHANNELS {
            return shape(format!("{} values for {n_frames}x{n_bins}x{N_CHANNELS}", data.len()));
        }
        if data.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return invalid("feature magnitudes must be finite and non-negative");
        }
        Ok(Self { n_frames, n_bins, data })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn n_channels(&self) -> usize {
        N_CHANNELS
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.n_frames, self.n_bins, N_CHANNELS]
    }

    pub fn frame_rate(&self) -> f64 {
        SAMPLE_RATE as f64 / (StftConfig::default().hop as f64)
    }

    pub fn get(&self, t: usize, f: usize, c: usize) -> f64 {
        self.data[(t * self.n_bins + f) * N_CHANNELS + c]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Frames `[start, start + len)` as a flat slice.
    pub fn frames(&self, start: usize, len: usize) -> &[f64] {
        let row = self.n_bins * N_CHANNELS;
        &self.data[start * row..(start + len) * row]
    }
}

pub fn features_from_foa(foa: &FoaSignal, cfg: StftConfig) -> Result<FeatureTensor> {
    features_from_channels([foa.channel(0), foa.channel(1), foa.channel(2), foa.channel(3)], cfg)
}

pub fn features_from_channels(channels: [&[f64]; 4], cfg: StftConfig) -> Result<FeatureTensor> {
    let len = channels[0].len();
    if channels.iter().any(|c| c.len() != len) {
        return invalid("channel lengths differ");
    }
    let stft = Stft::new(cfg)?;
    let n_bins = cfg.n_bins();
    let n_frames = cfg.frame_count(len);
    let mut data = vec![0.0; n_frames * n_bins * N_CHANNELS];
    for (c, samples) in channels.iter().enumerate() {
        let spec = stft.analyze(samples)?;
        for (i, z) in spec.bins().iter().enumerate() {
            data[i * N_CHANNELS + c] = z.norm();
        }
    }
    FeatureTensor::new(n_frames, n_bins, data)
}
