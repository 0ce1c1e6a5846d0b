//! Speech surrogate and diffuse noise sources.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::ambisonics::{steering_vector, Direction, FoaSignal};
use crate::dsp::{rms, AudioClip, SAMPLE_RATE};
use crate::error::{invalid, Result};
use crate::seed::rng;

const TARGET_RMS: f64 = 0.1;
const PITCH_RANGE: (f64, f64) = (80.0, 300.0);
const SYLLABLE_RANGE: (f64, f64) = (2.0, 8.0);
const EXCITATION_DB: f64 = -25.0;

/// Deterministic speech-like signal: a sawtooth carrier whose pitch drifts
/// within 80-300 Hz, amplitude-modulated by a 2-8 Hz syllabic envelope, plus
/// wideband excitation 25 dB below the carrier. RMS is normalized to 0.1.
pub fn surrogate_speech(duration: f64, seed: u64) -> Result<AudioClip> {
    if !(duration > 0.0) || !duration.is_finite() {
        return invalid(format!("speech duration must be positive, got {duration}"));
    }
    let n = (duration * SAMPLE_RATE as f64).round().max(1.0) as usize;
    let fs = SAMPLE_RATE as f64;
    let mut r = rng(seed);

    let base_pitch: f64 = r.gen_range(95.0..240.0);
    let drift_rate: [f64; 2] = [r.gen_range(0.1..0.6), r.gen_range(0.6..2.0)];
    let drift_depth: [f64; 2] = [r.gen_range(0.05..0.25), r.gen_range(0.02..0.1)];
    let drift_phase: [f64; 2] = [r.gen_range(0.0..2.0 * PI), r.gen_range(0.0..2.0 * PI)];
    let syl_base: f64 = r.gen_range(3.0..6.0);
    let syl_rate_mod: f64 = r.gen_range(0.1..0.5);
    let syl_phase0: f64 = r.gen_range(0.0..1.0);
    let mut carrier_phase: f64 = r.gen_range(0.0..1.0);
    let mut syl_phase = syl_phase0;

    let mut carrier = Vec::with_capacity(n);
    let mut envelope = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / fs;
        let octaves = drift_depth[0] * (2.0 * PI * drift_rate[0] * t + drift_phase[0]).sin()
            + drift_depth[1] * (2.0 * PI * drift_rate[1] * t + drift_phase[1]).sin();
        let f0 = (base_pitch * octaves.exp2()).clamp(PITCH_RANGE.0, PITCH_RANGE.1);
        carrier_phase = (carrier_phase + f0 / fs).fract();
        carrier.push(2.0 * carrier_phase - 1.0);

        let rate = (syl_base * (1.0 + 0.5 * (2.0 * PI * syl_rate_mod * t).sin()))
            .clamp(SYLLABLE_RANGE.0, SYLLABLE_RANGE.1);
        syl_phase = (syl_phase + rate / fs).fract();
        envelope.push((0.5 - 0.5 * (2.0 * PI * syl_phase).cos()).powf(1.5));
    }

    let carrier_rms = rms(&carrier);
    let excitation_gain = carrier_rms * 10f64.powf(EXCITATION_DB / 20.0);
    let mut out: Vec<f64> = carrier
        .iter()
        .zip(&envelope)
        .map(|(c, e)| {
            let z: f64 = StandardNormal.sample(&mut r);
            e * (c + excitation_gain * z)
        })
        .collect();
    let level = rms(&out);
    if level > 0.0 {
        let g = TARGET_RMS / level;
        out.iter_mut().for_each(|v| *v *= g);
    }
    AudioClip::from_samples(out)
}

/// Sum of `n_directions` independent white-noise plane waves arriving from
/// directions drawn uniformly on the sphere, scaled so the W channel has unit
/// RMS.
pub fn diffuse_noise(duration: f64, n_directions: usize, seed: u64) -> Result<FoaSignal> {
    if n_directions < 8 {
        return invalid(format!("diffuse noise needs at least 8 directions, got {n_directions}"));
    }
    if !(duration > 0.0) || !duration.is_finite() {
        return invalid(format!("noise duration must be positive, got {duration}"));
    }
    let n = (duration * SAMPLE_RATE as f64).round().max(1.0) as usize;
    let mut r = rng(seed);
    let mut out = FoaSignal::zeros(n);
    for _ in 0..n_directions {
        let z: f64 = r.gen_range(-1.0..=1.0);
        let az: f64 = r.gen_range(-PI..PI);
        let g = steering_vector(Direction::new(az, z.asin())).gains;
        let chans = out.channels_mut();
        for i in 0..n {
            let s: f64 = StandardNormal.sample(&mut r);
            for c in 0..4 {
                chans[c][i] += g[c] * s;
            }
        }
    }
    let w = rms(out.channel(0));
    if w > 0.0 {
        out.scale(1.0 / w);
    }
    Ok(out)
}

/// Magnitude-weighted mean frequency of the whole clip, in Hz.
pub fn spectral_centroid(x: &[f64]) -> f64 {
    let n = x.len().next_power_of_two();
    let mut planner = realfft::RealFftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let mut buf = vec![0.0; n];
    buf[..x.len()].copy_from_slice(x);
    let mut spec = fft.make_output_vec();
    fft.process(&mut buf, &mut spec).expect("sizes from plan");
    let (mut num, mut den) = (0.0, 0.0);
    for (k, z) in spec.iter().enumerate() {
        let f = k as f64 * SAMPLE_RATE as f64 / n as f64;
        num += f * z.norm();
        den += z.norm();
    }
    num / den
}
