//! Random scene descriptions, mixture synthesis and schedule-based labels.

use std::f64::consts::PI;

use rand::Rng as _;
use realfft::RealFftPlanner;
use serde::{Deserialize, Serialize};

use super::{image_source_srir, FoaSrir, PointPose, Room, WallReflection, SPEED_OF_SOUND};
use crate::ambisonics::FoaSignal;
use crate::dsp::{StftConfig, SAMPLE_RATE};
use crate::error::{invalid, Result};
use crate::roomsim::speech::{diffuse_noise, surrogate_speech};
use crate::seed::{derive_seed, rng};

/// Speaker-count classes 0..=5.
pub const N_CLASSES: usize = 6;
pub const MAX_SPEAKERS: usize = N_CLASSES - 1;

const RAMP_SECONDS: f64 = 0.010;
const NOISE_STREAM: u64 = 0x6e6f_6973_65;
/// W-channel speech level assumed for scenes without any speaker when
/// scaling the noise to the scene SNR.
const SILENT_SCENE_SPEECH_RMS: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeakerSpec {
    pub source_pose: PointPose,
    pub onset: f64,
    pub offset: f64,
    pub signal_seed: u64,
}

/// Simulation settings shared by every scene of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneOptions {
    pub max_image_order: usize,
    pub srir_len_cap: usize,
    pub noise_directions: usize,
}

impl Default for SceneOptions {
    fn default() -> Self {
        Self { max_image_order: 6, srir_len_cap: 16_000, noise_directions: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    pub room: Room,
    pub mic_pose: PointPose,
    pub speakers: Vec<SpeakerSpec>,
    pub duration: f64,
    /// `None` disables the diffuse noise entirely.
    pub noise_snr_db: Option<f64>,
    pub master_seed: u64,
    #[serde(default)]
    pub options: SceneOptions,
}

impl MixtureSpec {
    pub fn n_samples(&self) -> usize {
        (self.duration * SAMPLE_RATE as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return invalid(format!("scene duration must be positive, got {}", self.duration));
        }
        if self.n_samples() < StftConfig::default().window_len {
            return invalid("scene shorter than one analysis window");
        }
        if self.speakers.len() > MAX_SPEAKERS {
            return invalid(format!("{} speakers, at most {MAX_SPEAKERS} supported", self.speakers.len()));
        }
        self.room.validate()?;
        self.mic_pose.check_inside(&self.room)?;
        for s in &self.speakers {
            s.source_pose.check_inside(&self.room)?;
            if !(0.0 <= s.onset && s.onset < s.offset && s.offset <= self.duration) {
                return invalid(format!("speaker activity [{}, {}) outside scene", s.onset, s.offset));
            }
        }
        Ok(())
    }

    pub fn schedule(&self) -> Vec<(f64, f64)> {
        self.speakers.iter().map(|s| (s.onset, s.offset)).collect()
    }
}

/// Per-frame ground-truth speaker counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameLabels {
    pub counts: Vec<u8>,
}

impl FrameLabels {
    pub fn new(counts: Vec<u8>) -> Result<Self> {
        if let Some(c) = counts.iter().find(|c| **c as usize >= N_CLASSES) {
            return invalid(format!("label {c} outside 0..{N_CLASSES}"));
        }
        Ok(Self { counts })
    }

    /// Count of intervals `[onset, offset)` (seconds) covering each frame center.
    pub fn from_schedule(schedule: &[(f64, f64)], n_frames: usize, cfg: StftConfig) -> Result<Self> {
        let counts = (0..n_frames)
            .map(|t| {
                let center = cfg.frame_center(t) / SAMPLE_RATE as f64;
                schedule.iter().filter(|(on, off)| *on <= center && center < *off).count() as u8
            })
            .collect();
        Self::new(counts)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn onehot(&self) -> Vec<[f64; N_CLASSES]> {
        self.counts
            .iter()
            .map(|&c| {
                let mut v = [0.0; N_CLASSES];
                v[c as usize] = 1.0;
                v
            })
            .collect()
    }
}

/// 10 ms raised-cosine fade in and out, shortened for very brief activity.
fn apply_ramps(x: &mut [f64]) {
    let ramp = ((RAMP_SECONDS * SAMPLE_RATE as f64) as usize).min(x.len() / 2);
    for i in 0..ramp {
        let g = 0.5 - 0.5 * (PI * (i as f64 + 0.5) / ramp as f64).cos();
        x[i] *= g;
        let j = x.len() - 1 - i;
        x[j] *= g;
    }
}

/// Adds `dry * ir` into `out` starting at `offset`, truncated to `out.len()`.
fn convolve_into(out: &mut [f64], offset: usize, dry: &[f64], ir: &[f64], planner: &mut RealFftPlanner<f64>) {
    let full = dry.len() + ir.len() - 1;
    let n = full.next_power_of_two();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut a = vec![0.0; n];
    a[..dry.len()].copy_from_slice(dry);
    let mut b = vec![0.0; n];
    b[..ir.len()].copy_from_slice(ir);
    let mut fa = fwd.make_output_vec();
    let mut fb = fwd.make_output_vec();
    fwd.process(&mut a, &mut fa).expect("sizes from plan");
    fwd.process(&mut b, &mut fb).expect("sizes from plan");
    fa.iter_mut().zip(&fb).for_each(|(x, y)| *x *= y);
    inv.process(&mut fa, &mut a).expect("sizes from plan");
    let norm = 1.0 / n as f64;
    for (i, v) in a[..full].iter().enumerate() {
        match out.get_mut(offset + i) {
            Some(o) => *o += v * norm,
            None => break,
        }
    }
}

fn wet_speaker(
    spec: &MixtureSpec,
    s: &SpeakerSpec,
    planner: &mut RealFftPlanner<f64>,
    out: &mut FoaSignal,
) -> Result<()> {
    let fs = SAMPLE_RATE as f64;
    let ir: FoaSrir = image_source_srir(
        &spec.room,
        &s.source_pose,
        &spec.mic_pose,
        spec.options.max_image_order,
        fs,
        spec.options.srir_len_cap,
    )?;
    let start = (s.onset * fs).round() as usize;
    let stop = ((s.offset * fs).round() as usize).min(out.len());
    if stop <= start {
        return Ok(());
    }
    let mut dry = surrogate_speech((stop - start) as f64 / fs, s.signal_seed)?.into_samples();
    dry.truncate(stop - start);
    apply_ramps(&mut dry);
    for (ch, h) in out.channels_mut().iter_mut().zip(&ir.channels) {
        convolve_into(ch, start, &dry, h, planner);
    }
    Ok(())
}

/// Reverberant multi-speaker FOA scene plus diffuse noise, with per-frame
/// speaker counts taken from the activity schedule at frame centers.
pub fn synth_mixture(spec: &MixtureSpec) -> Result<(FoaSignal, FrameLabels)> {
    spec.validate()?;
    let n = spec.n_samples();
    let fs = SAMPLE_RATE as f64;
    let mut planner = RealFftPlanner::new();
    let mut mix = FoaSignal::zeros(n);
    for s in &spec.speakers {
        wet_speaker(spec, s, &mut planner, &mut mix)?;
    }

    if let Some(snr_db) = spec.noise_snr_db {
        let noise = diffuse_noise(
            spec.duration,
            spec.options.noise_directions,
            derive_seed(spec.master_seed, NOISE_STREAM),
        )?;
        let mut active = vec![false; n];
        for s in &spec.speakers {
            let a = (s.onset * fs).round() as usize;
            let b = ((s.offset * fs).round() as usize).min(n);
            active[a.min(n)..b].iter_mut().for_each(|v| *v = true);
        }
        let n_active = active.iter().filter(|v| **v).count();
        let (speech_pow, noise_pow) = if n_active == 0 {
            let nw = noise.channel(0);
            (SILENT_SCENE_SPEECH_RMS.powi(2), nw.iter().map(|v| v * v).sum::<f64>() / nw.len() as f64)
        } else {
            let mw = mix.channel(0);
            let nw = noise.channel(0);
            let mut sp = 0.0;
            let mut np = 0.0;
            for i in (0..n).filter(|&i| active[i]) {
                sp += mw[i] * mw[i];
                np += nw[i] * nw[i];
            }
            (sp / n_active as f64, np / n_active as f64)
        };
        let gain = (speech_pow / (noise_pow * 10f64.powf(snr_db / 10.0))).sqrt();
        mix.add_scaled(&noise, gain)?;
    }

    let cfg = StftConfig::default();
    let labels = FrameLabels::from_schedule(&spec.schedule(), cfg.frame_count(n), cfg)?;
    Ok((mix, labels))
}

/// Ranges the random scene generator draws from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub scene_duration_s: f64,
    pub max_speakers: usize,
    pub room_dims_min: [f64; 3],
    pub room_dims_max: [f64; 3],
    pub reflection_min: f64,
    pub reflection_max: f64,
    pub snr_db_min: f64,
    pub snr_db_max: f64,
    pub min_activity_s: f64,
    pub wall_margin_m: f64,
    pub min_source_distance_m: f64,
    pub scene: SceneOptions,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            scene_duration_s: 10.0,
            max_speakers: MAX_SPEAKERS,
            room_dims_min: [3.0, 3.0, 2.5],
            room_dims_max: [8.0, 6.0, 3.5],
            reflection_min: 0.3,
            reflection_max: 0.85,
            snr_db_min: 5.0,
            snr_db_max: 25.0,
            min_activity_s: 0.5,
            wall_margin_m: 0.3,
            min_source_distance_m: 0.5,
            scene: SceneOptions::default(),
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_speakers > MAX_SPEAKERS {
            return invalid(format!("max_speakers {} exceeds {MAX_SPEAKERS}", self.max_speakers));
        }
        if !(self.min_activity_s > 0.0 && self.min_activity_s <= self.scene_duration_s) {
            return invalid("min_activity_s must lie in (0, scene_duration_s]");
        }
        if (self.scene_duration_s * SAMPLE_RATE as f64) < StftConfig::default().window_len as f64 {
            return invalid("scene_duration_s shorter than one analysis window");
        }
        for a in 0..3 {
            let lo = self.room_dims_min[a];
            if !(lo <= self.room_dims_max[a] && lo > 2.0 * self.wall_margin_m) {
                return invalid("room dimension ranges must exceed twice the wall margin");
            }
        }
        if !(0.0 <= self.reflection_min && self.reflection_min <= self.reflection_max && self.reflection_max < 1.0) {
            return invalid("reflection range must lie in [0, 1)");
        }
        if !(self.snr_db_min <= self.snr_db_max) {
            return invalid("snr range inverted");
        }
        if !(self.wall_margin_m >= 0.0 && self.min_source_distance_m >= 0.0) {
            return invalid("margins must be non-negative");
        }
        Ok(())
    }

    /// Longest possible impulse response must fit the cap for every room in range.
    pub fn worst_case_srir_len(&self) -> usize {
        let d = self.room_dims_max;
        let diag = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        let longest = (self.scene.max_image_order as f64 + 1.0) * 2.0 * diag.max(d.iter().cloned().fold(0.0, f64::max));
        (longest / SPEED_OF_SOUND * SAMPLE_RATE as f64) as usize + 2
    }
}

fn uniform(r: &mut crate::seed::Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        r.gen_range(lo..hi)
    } else {
        lo
    }
}

fn random_pose(r: &mut crate::seed::Rng, room: &Room, margin: f64) -> PointPose {
    let d = room.dimensions;
    PointPose { position: std::array::from_fn(|a| uniform(r, margin, d[a] - margin)) }
}

/// Draws a scene. Speaker count is uniform on `0..=max_speakers`; every pose
/// keeps `wall_margin_m` from the walls and sources keep
/// `min_source_distance_m` from the microphone (rejection sampled).
pub fn random_mixture_spec(cfg: &GeneratorConfig, seed: u64) -> Result<MixtureSpec> {
    cfg.validate()?;
    let mut r = rng(seed);
    let n_speakers = r.gen_range(0..=cfg.max_speakers);
    let dims: [f64; 3] = std::array::from_fn(|a| uniform(&mut r, cfg.room_dims_min[a], cfg.room_dims_max[a]));
    let beta = uniform(&mut r, cfg.reflection_min, cfg.reflection_max);
    let room = Room { dimensions: dims, reflection: WallReflection::Uniform(beta), speed_of_sound: SPEED_OF_SOUND };
    let mic_pose = random_pose(&mut r, &room, cfg.wall_margin_m);
    let dur = cfg.scene_duration_s;
    let mut speakers = Vec::with_capacity(n_speakers);
    for _ in 0..n_speakers {
        let mut source_pose = random_pose(&mut r, &room, cfg.wall_margin_m);
        for _ in 0..1000 {
            if source_pose.distance(&mic_pose) >= cfg.min_source_distance_m {
                break;
            }
            source_pose = random_pose(&mut r, &room, cfg.wall_margin_m);
        }
        let onset = uniform(&mut r, 0.0, dur - cfg.min_activity_s);
        let offset = uniform(&mut r, onset + cfg.min_activity_s, dur);
        speakers.push(SpeakerSpec { source_pose, onset, offset, signal_seed: r.gen() });
    }
    let snr = uniform(&mut r, cfg.snr_db_min, cfg.snr_db_max);
    Ok(MixtureSpec {
        room,
        mic_pose,
        speakers,
        duration: dur,
        noise_snr_db: Some(snr),
        master_seed: seed,
        options: cfg.scene,
    })
}
