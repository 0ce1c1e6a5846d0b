//! Shoebox image-source simulation of FOA room impulse responses and the
//! synthetic mixture pipeline built on top of it.

mod mixture;
mod speech;

pub use mixture::{
    random_mixture_spec, synth_mixture, FrameLabels, GeneratorConfig, MixtureSpec, SceneOptions, SpeakerSpec,
    N_CLASSES,
};
pub use speech::{diffuse_noise, spectral_centroid, surrogate_speech};

use serde::{Deserialize, Serialize};

use crate::ambisonics::{steering_vector, Direction};
use crate::error::{invalid, Error, Result};

pub const SPEED_OF_SOUND: f64 = 343.0;

/// Wall reflection coefficients in the order x=0, x=Lx, y=0, y=Ly, z=0, z=Lz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WallReflection {
    Uniform(f64),
    PerWall([f64; 6]),
}

impl WallReflection {
    pub fn coefficients(&self) -> [f64; 6] {
        match *self {
            WallReflection::Uniform(b) => [b; 6],
            WallReflection::PerWall(b) => b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub dimensions: [f64; 3],
    pub reflection: WallReflection,
    pub speed_of_sound: f64,
}

impl Room {
    pub fn new(dimensions: [f64; 3], beta: f64) -> Result<Self> {
        let room = Self { dimensions, reflection: WallReflection::Uniform(beta), speed_of_sound: SPEED_OF_SOUND };
        room.validate()?;
        Ok(room)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimensions.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return invalid(format!("room dimensions must be positive, got {:?}", self.dimensions));
        }
        if self.reflection.coefficients().iter().any(|b| !(0.0..1.0).contains(b)) {
            return invalid("reflection coefficients must lie in [0, 1)");
        }
        if !(self.speed_of_sound > 0.0) {
            return invalid("speed of sound must be positive");
        }
        Ok(())
    }
}

/// A point strictly inside a room.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointPose {
    pub position: [f64; 3],
}

impl PointPose {
    pub fn new(position: [f64; 3], room: &Room) -> Result<Self> {
        let pose = Self { position };
        pose.check_inside(room)?;
        Ok(pose)
    }

    pub fn check_inside(&self, room: &Room) -> Result<()> {
        for (p, d) in self.position.iter().zip(room.dimensions) {
            if !(*p > 0.0 && *p < d) {
                return invalid(format!("pose {:?} outside room {:?}", self.position, room.dimensions));
            }
        }
        Ok(())
    }

    pub fn distance(&self, other: &PointPose) -> f64 {
        dist(self.position, other.position)
    }
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// One mirror image of the source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageSource {
    pub position: [f64; 3],
    pub order: usize,
    /// Product of the reflection coefficients along the path.
    pub reflection_gain: f64,
}

/// Enumerates all images of `src` with at most `max_order` wall bounces.
///
/// Along each axis an image is indexed by `(m, q)` with `m` an integer and
/// `q` in {0, 1}; its coordinate is `(1 - 2q) s + 2 m L` and it has bounced
/// `|m - q|` times off the low wall and `|m|` times off the high wall.
pub fn image_sources(room: &Room, src: &PointPose, max_order: usize) -> Vec<ImageSource> {
    let beta = room.reflection.coefficients();
    let n = max_order as i64;
    let mut out = Vec::new();
    for mx in -n..=n {
        for qx in 0..2i64 {
            let ox = ((mx - qx).abs() + mx.abs()) as usize;
            if ox > max_order {
                continue;
            }
            for my in -n..=n {
                for qy in 0..2i64 {
                    let oy = ((my - qy).abs() + my.abs()) as usize;
                    if ox + oy > max_order {
                        continue;
                    }
                    for mz in -n..=n {
                        for qz in 0..2i64 {
                            let oz = ((mz - qz).abs() + mz.abs()) as usize;
                            if ox + oy + oz > max_order {
                                continue;
                            }
                            let axes = [(mx, qx), (my, qy), (mz, qz)];
                            let mut position = [0.0; 3];
                            let mut reflection_gain = 1.0;
                            for (a, &(m, q)) in axes.iter().enumerate() {
                                let s = src.position[a];
                                let l = room.dimensions[a];
                                position[a] = (1 - 2 * q) as f64 * s + 2.0 * m as f64 * l;
                                reflection_gain *= beta[2 * a].powi((m - q).abs() as i32)
                                    * beta[2 * a + 1].powi(m.abs() as i32);
                            }
                            out.push(ImageSource { position, order: ox + oy + oz, reflection_gain });
                        }
                    }
                }
            }
        }
    }
    out
}

/// Four-channel (W, X, Y, Z) spatial room impulse response.
#[derive(Debug, Clone, PartialEq)]
pub struct FoaSrir {
    pub channels: [Vec<f64>; 4],
}

impl FoaSrir {
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn energy(&self) -> f64 {
        self.channels.iter().flatten().map(|v| v * v).sum()
    }
}

/// Image-source FOA impulse response. Each image contributes
/// `reflection_gain / distance`, delayed by `distance / c` (linear
/// interpolation between the two nearest samples) and spatialized by the
/// steering vector of its direction seen from the microphone.
pub fn image_source_srir(
    room: &Room,
    src: &PointPose,
    mic: &PointPose,
    max_order: usize,
    fs: f64,
    len_cap: usize,
) -> Result<FoaSrir> {
    room.validate()?;
    src.check_inside(room)?;
    mic.check_inside(room)?;
    if src.distance(mic) < 1e-9 {
        return invalid("source and microphone coincide");
    }
    if !(fs > 0.0) {
        return invalid("sampling rate must be positive");
    }
    let images = image_sources(room, src, max_order);
    let max_delay = images
        .iter()
        .map(|im| dist(im.position, mic.position) / room.speed_of_sound * fs)
        .fold(0.0, f64::max);
    let len = max_delay.floor() as usize + 2;
    if len > len_cap {
        return Err(Error::InvalidArgument(format!(
            "impulse response needs {len} samples for order {max_order}, cap is {len_cap}"
        )));
    }
    let mut channels: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; len]);
    for im in &images {
        if im.reflection_gain == 0.0 {
            continue;
        }
        let rel = [
            im.position[0] - mic.position[0],
            im.position[1] - mic.position[1],
            im.position[2] - mic.position[2],
        ];
        let d = dist(im.position, mic.position);
        let gains = steering_vector(Direction::from_vector(rel)?).gains;
        let amp = im.reflection_gain / d;
        let delay = d / room.speed_of_sound * fs;
        let i0 = delay.floor() as usize;
        let frac = delay - i0 as f64;
        for (ch, g) in channels.iter_mut().zip(gains) {
            ch[i0] += (1.0 - frac) * amp * g;
            ch[i0 + 1] += frac * amp * g;
        }
    }
    Ok(FoaSrir { channels })
}
