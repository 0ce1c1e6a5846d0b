//! On-disk formats: CNTW checkpoints, feature shards and CSV tables.
//!
//! Both binary containers share one layout:
//!
//! ```text
//! magic (4 bytes) | version u32 LE | header length u32 LE | JSON header | f32 LE payload
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ambisonics::FeatureTensor;
use crate::crnn::{CrnnConfig, CrnnParams, EpochStats, TrainState};
use crate::error::{Error, Result};
use crate::neuralnet::{Adam, AdamConfig, Tensor};
use crate::roomsim::{FrameLabels, MixtureSpec};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CNTW";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const SHARD_MAGIC: &[u8; 4] = b"CNTD";
pub const SHARD_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

fn write_container<W: Write, H: Serialize>(
    mut w: W,
    magic: &[u8; 4],
    version: u32,
    header: &H,
    payload: &[&[f32]],
) -> Result<()> {
    let json = serde_json::to_vec(header)?;
    let len = u32::try_from(json.len()).map_err(|_| Error::Format("header too large".into()))?;
    w.write_all(magic)?;
    w.write_all(&version.to_le_bytes())?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(&json)?;
    for block in payload {
        for v in *block {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_container_header<R: Read, H: DeserializeOwned>(r: &mut R, magic: &[u8; 4], version: u32) -> Result<H> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&m),
            String::from_utf8_lossy(magic)
        )));
    }
    let v = read_u32(r)?;
    if v != version {
        return Err(Error::Format(format!("format version {v}, this build reads version {version}")));
    }
    let len = read_u32(r)? as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    Ok(serde_json::from_slice(&json)?)
}

fn read_f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f32>> {
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes)?;
    Ok(bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect())
}

fn expect_eof<R: Read>(r: &mut R) -> Result<()> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => Ok(()),
        _ => Err(Error::Format("trailing bytes after payload".into())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointHeader {
    tensors: Vec<TensorEntry>,
    config: CrnnConfig,
    adam: AdamConfig,
    adam_step: u64,
    epoch: usize,
    history: Vec<EpochStats>,
    provenance: serde_json::Value,
}

/// A training state plus free-form provenance (seeds, config hash, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub state: TrainState<f32>,
    pub provenance: serde_json::Value,
}

impl Checkpoint {
    pub fn new(state: TrainState<f32>, provenance: serde_json::Value) -> Self {
        Self { state, provenance }
    }

    /// A checkpoint with fresh optimizer moments.
    pub fn from_params(params: CrnnParams<f32>, provenance: serde_json::Value) -> Self {
        Self { state: TrainState::new(params, AdamConfig::default()), provenance }
    }

    pub fn params(&self) -> &CrnnParams<f32> {
        &self.state.params
    }

    fn entries(&self) -> (Vec<TensorEntry>, Vec<&Tensor<f32>>) {
        let named = self.state.params.named_tensors();
        let mut entries = Vec::new();
        let mut tensors = Vec::new();
        let entry = |name: String, t: &Tensor<f32>| TensorEntry { name, shape: t.shape().to_vec(), dtype: "f32".into() };
        for (n, t) in &named {
            entries.push(entry(n.clone(), t));
            tensors.push(*t);
        }
        for (prefix, moments) in [("adam.m.", &self.state.optimizer.m), ("adam.v.", &self.state.optimizer.v)] {
            for ((n, _), t) in named.iter().zip(moments.iter()) {
                entries.push(entry(format!("{prefix}{n}"), t));
                tensors.push(t);
            }
        }
        (entries, tensors)
    }

    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        let (tensors, data) = self.entries();
        let header = CheckpointHeader {
            tensors,
            config: self.state.params.config.clone(),
            adam: self.state.optimizer.config,
            adam_step: self.state.optimizer.step,
            epoch: self.state.epoch,
            history: self.state.history.clone(),
            provenance: self.provenance.clone(),
        };
        let payload: Vec<&[f32]> = data.iter().map(|t| t.data()).collect();
        write_container(w, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, &header, &payload)
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let header: CheckpointHeader = read_container_header(&mut r, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
        header.config.validate().map_err(|e| Error::Format(format!("checkpoint config: {e}")))?;
        let mut tensors = Vec::new();
        for e in &header.tensors {
            if e.dtype != "f32" {
                return Err(Error::Format(format!("tensor {} has dtype {}, expected f32", e.name, e.dtype)));
            }
            let n = e.shape.iter().product();
            tensors.push((e.name.clone(), Tensor::new(e.shape.clone(), read_f32s(&mut r, n)?)?));
        }
        expect_eof(&mut r)?;

        let take = |tensors: &mut Vec<(String, Tensor<f32>)>, prefix: &str| -> Vec<(String, Tensor<f32>)> {
            let (hit, rest): (Vec<_>, Vec<_>) = std::mem::take(tensors).into_iter().partition(|(n, _)| n.starts_with(prefix));
            *tensors = rest;
            hit.into_iter().map(|(n, t)| (n[prefix.len()..].to_string(), t)).collect()
        };
        let m = take(&mut tensors, "adam.m.");
        let v = take(&mut tensors, "adam.v.");
        let params = CrnnParams::from_named(&header.config, tensors)?;
        let m = CrnnParams::from_named(&header.config, m)?;
        let v = CrnnParams::from_named(&header.config, v)?;
        let optimizer = Adam {
            config: header.adam,
            step: header.adam_step,
            m: m.tensors().into_iter().cloned().collect(),
            v: v.tensors().into_iter().cloned().collect(),
        };
        Ok(Self {
            state: TrainState { params, optimizer, epoch: header.epoch, history: header.history },
            provenance: header.provenance,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(BufReader::new(File::open(path)?))
    }
}

/// One synthesized scene with its features and frame labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub spec: MixtureSpec,
    pub features: FeatureTensor,
    pub labels: FrameLabels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ShardEntry {
    spec: MixtureSpec,
    n_frames: usize,
    n_bins: usize,
    labels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ShardHeader {
    dtype: String,
    recordings: Vec<ShardEntry>,
}

/// Writes recordings with features stored as `f32`.
pub fn write_shard<W: Write>(w: W, recordings: &[Recording]) -> Result<()> {
    let header = ShardHeader {
        dtype: "f32".into(),
        recordings: recordings
            .iter()
            .map(|r| ShardEntry {
                spec: r.spec.clone(),
                n_frames: r.features.n_frames(),
                n_bins: r.features.n_bins(),
                labels: r.labels.counts.clone(),
            })
            .collect(),
    };
    let data: Vec<Vec<f32>> = recordings.iter().map(|r| r.features.data().iter().map(|v| *v as f32).collect()).collect();
    let payload: Vec<&[f32]> = data.iter().map(|d| d.as_slice()).collect();
    write_container(w, SHARD_MAGIC, SHARD_VERSION, &header, &payload)
}

pub fn read_shard<R: Read>(mut r: R) -> Result<Vec<Recording>> {
    let header: ShardHeader = read_container_header(&mut r, SHARD_MAGIC, SHARD_VERSION)?;
    if header.dtype != "f32" {
        return Err(Error::Format(format!("shard dtype {}, expected f32", header.dtype)));
    }
    let mut out = Vec::with_capacity(header.recordings.len());
    for e in header.recordings {
        let n = e.n_frames * e.n_bins * 4;
        let data = read_f32s(&mut r, n)?.into_iter().map(f64::from).collect();
        if e.labels.len() != e.n_frames {
            return Err(Error::Format(format!("{} labels for {} frames", e.labels.len(), e.n_frames)));
        }
        out.push(Recording {
            spec: e.spec,
            features: FeatureTensor::new(e.n_frames, e.n_bins, data)?,
            labels: FrameLabels::new(e.labels)?,
        });
    }
    expect_eof(&mut r)?;
    Ok(out)
}

pub fn save_shard(path: &Path, recordings: &[Recording]) -> Result<()> {
    write_shard(BufWriter::new(File::create(path)?), recordings)
}

pub fn load_shard(path: &Path) -> Result<Vec<Recording>> {
    read_shard(BufReader::new(File::open(path)?))
}

/// Hex SHA-256 of the compact JSON form of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let json = serde_json::to_vec(value)?;
    Ok(format!("{:x}", Sha256::digest(&json)))
}

/// Writes a CSV table preceded by a `# spkcount <version> config_hash=<hash>` line.
pub fn write_csv<W: Write>(mut w: W, hash: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    writeln!(w, "# spkcount {TOOL_VERSION} config_hash={hash}")?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(header).map_err(csv_err)?;
    for r in rows {
        csv.write_record(r).map_err(csv_err)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn save_csv(path: &Path, hash: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    write_csv(BufWriter::new(File::create(path)?), hash, header, rows)
}

/// Reads a table written by [`write_csv`]: header names and string rows.
pub fn read_csv<R: Read>(r: R) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut csv = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let header = csv.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in csv.records() {
        rows.push(rec.map_err(csv_err)?.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

pub fn load_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    read_csv(BufReader::new(File::open(path)?))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crnn::{build, train, TrainConfig, TrainingSet};
    use crate::roomsim::{random_mixture_spec, GeneratorConfig};

    fn tiny() -> CrnnConfig {
        CrnnConfig {
            conv_channels: vec![3, 2, 4, 2],
            pool_sizes: vec![2, 2],
            lstm_hidden: 5,
            seq_len: 6,
            n_bins: 16,
            ..CrnnConfig::default()
        }
    }

    fn trained_state() -> TrainState<f32> {
        let cfg = tiny();
        let x: Vec<f32> = (0..6 * 16 * 4).map(|i| (i % 11) as f32 / 11.0).collect();
        let set =
            TrainingSet::from_sequences(vec![(Tensor::new(vec![6, 16, 4], x).unwrap(), vec![0, 1, 2, 3, 4, 5])]).unwrap();
        train(build(&cfg, 1).unwrap(), &set, &TrainConfig { epochs: 2, batch_size: 1, ..TrainConfig::default() })
            .unwrap()
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let ck = Checkpoint::new(trained_state(), serde_json::json!({"seed": 1}));
        let mut bytes = Vec::new();
        ck.write(&mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"CNTW");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        let back = Checkpoint::read(bytes.as_slice()).unwrap();
        assert_eq!(back, ck);
        let mut again = Vec::new();
        back.write(&mut again).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let ck = Checkpoint::from_params(build(&tiny(), 0).unwrap(), serde_json::Value::Null);
        let mut bytes = Vec::new();
        ck.write(&mut bytes).unwrap();

        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(matches!(Checkpoint::read(v2.as_slice()), Err(Error::Format(m)) if m.contains("version")));
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(Checkpoint::read(magic.as_slice()).is_err());
        assert!(Checkpoint::read(&bytes[..bytes.len() - 1]).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(Checkpoint::read(long.as_slice()).is_err());
    }

    #[test]
    fn shard_round_trip_is_exact() {
        let g = GeneratorConfig { scene_duration_s: 0.5, min_activity_s: 0.1, ..GeneratorConfig::default() };
        let mut recs = Vec::new();
        for seed in 0..2 {
            let spec = random_mixture_spec(&g, seed).unwrap();
            let n = 14;
            let data: Vec<f64> = (0..n * 8 * 4).map(|i| (((i * 7 + seed as usize) % 13) as f32 * 0.1) as f64).collect();
            recs.push(Recording {
                spec,
                features: FeatureTensor::new(n, 8, data).unwrap(),
                labels: FrameLabels::new(vec![seed as u8; n]).unwrap(),
            });
        }
        let mut bytes = Vec::new();
        write_shard(&mut bytes, &recs).unwrap();
        let back = read_shard(bytes.as_slice()).unwrap();
        assert_eq!(back, recs);
        let mut again = Vec::new();
        write_shard(&mut again, &back).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn csv_with_comment_line() {
        let mut out = Vec::new();
        let rows = vec![vec!["3".to_string(), "0.5".to_string()]];
        write_csv(&mut out, "abc", &["K", "accuracy"], &rows).unwrap();
        let text = String::from_utf8(out.clone()).unwrap();
        assert!(text.starts_with("# spkcount "));
        assert!(text.lines().next().unwrap().ends_with("config_hash=abc"));
        let (h, r) = read_csv(out.as_slice()).unwrap();
        assert_eq!(h, ["K", "accuracy"]);
        assert_eq!(r, rows);
    }

    #[test]
    fn hash_is_stable() {
        let a = config_hash(&tiny()).unwrap();
        assert_eq!(a, config_hash(&tiny()).unwrap());
        assert_eq!(a.len(), 64);
        assert_ne!(a, config_hash(&CrnnConfig::default()).unwrap());
    }
}
