//! Experiment plumbing: configuration, split-disjoint dataset generation,
//! training driver, taint grid and report tables.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ambisonics::features_from_foa;
use crate::analysis::{empirical_taint, overhead_frames, taint_mask, StackSpec};
use crate::crnn::{build, CrnnConfig, TrainConfig, TrainState, TrainingSet};
use crate::dsp::StftConfig;
use crate::error::{invalid, Error, Result};
use crate::harness::{curve_features, ConfusionMatrix, SweepConfig, SweepCurvePoint, SweepResult};
use crate::neuralnet::Tensor;
use crate::persist::{config_hash, load_shard, save_shard, Checkpoint, Recording, TOOL_VERSION};
use crate::roomsim::{random_mixture_spec, synth_mixture, GeneratorConfig, MixtureSpec, N_CLASSES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => invalid(format!("unknown split {s:?}; expected train, val or test")),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    /// Start of this split's index range; ranges are `2^40` wide.
    fn base(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Val => 1 << 40,
            Split::Test => 2 << 40,
        }
    }

    /// Scene seed of recording `index`. Distinct `(split, index)` pairs never
    /// share a seed for a given master seed.
    pub fn recording_seed(self, master: u64, index: usize) -> u64 {
        master ^ (self.base() + index as u64)
    }
}

/// Synthesizes one scene; features are rounded to `f32` so that in-memory
/// and on-disk datasets are identical.
pub fn synth_recording(spec: MixtureSpec) -> Result<Recording> {
    let (foa, labels) = synth_mixture(&spec)?;
    let mut features = features_from_foa(&foa, StftConfig::default())?;
    features = crate::ambisonics::FeatureTensor::new(
        features.n_frames(),
        features.n_bins(),
        features.data().iter().map(|v| *v as f32 as f64).collect(),
    )?;
    Ok(Recording { spec, features, labels })
}

/// Recordings `indices` of a split, synthesized in parallel, in index order.
pub fn generate_recordings(
    generator: &GeneratorConfig,
    master: u64,
    split: Split,
    indices: std::ops::Range<usize>,
) -> Result<Vec<Recording>> {
    generator.validate()?;
    indices
        .into_par_iter()
        .map(|i| synth_recording(random_mixture_spec(generator, split.recording_seed(master, i))?))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SplitCounts {
    fn default() -> Self {
        Self { train: 270, val: 0, test: 60 }
    }
}

impl SplitCounts {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepGrid {
    pub seq_lens: Vec<usize>,
    pub positions: Option<Vec<usize>>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self { seq_lens: vec![10, 20, 30, 40, 50], positions: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaintGrid {
    pub kernels: Vec<usize>,
    pub depths: Vec<usize>,
    pub seq_lens: Vec<usize>,
    pub probes: usize,
    pub seed: u64,
    /// Channel widths of the probe networks (first `depth` entries are used).
    pub probe_channels: Vec<usize>,
    pub n_bins: usize,
}

impl Default for TaintGrid {
    fn default() -> Self {
        Self {
            kernels: vec![1, 3, 5, 7],
            depths: vec![1, 2, 3, 4],
            seq_lens: vec![10, 20, 30, 40, 50],
            probes: 8,
            seed: 0,
            probe_channels: vec![8, 4, 16, 8],
            n_bins: 513,
        }
    }
}

/// Everything needed to regenerate a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub generator: GeneratorConfig,
    pub splits: SplitCounts,
    /// Recordings per dataset shard file.
    pub shard_size: usize,
    pub model: CrnnConfig,
    pub training: TrainConfig,
    /// Frames between the starts of consecutive training windows.
    pub window_hop: usize,
    pub sweep: SweepGrid,
    pub taint: TaintGrid,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            output_dir: PathBuf::from("runs/default"),
            generator: GeneratorConfig::default(),
            splits: SplitCounts::default(),
            shard_size: 16,
            model: CrnnConfig::default(),
            training: TrainConfig::default(),
            window_hop: 15,
            sweep: SweepGrid::default(),
            taint: TaintGrid::default(),
        }
    }
}

impl ExperimentConfig {
    /// Desk-scale setup: about 45 minutes of 0-3 speaker scenes and a
    /// narrower conv stack.
    pub fn toy() -> Self {
        Self {
            output_dir: PathBuf::from("runs/toy"),
            generator: GeneratorConfig {
                max_speakers: 3,
                scene_duration_s: 5.0,
                min_activity_s: 3.0,
                ..GeneratorConfig::default()
            },
            splits: SplitCounts { train: 540, val: 0, test: 120 },
            model: CrnnConfig { conv_channels: vec![16, 8, 32, 16], ..CrnnConfig::default() },
            training: TrainConfig { epochs: 10, batch_size: 16, ..TrainConfig::default() },
            window_hop: 30,
            sweep: SweepGrid { seq_lens: vec![30], positions: None },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.model.validate()?;
        self.training.validate()?;
        if self.shard_size == 0 || self.window_hop == 0 {
            return invalid("shard_size and window_hop must be positive");
        }
        if self.sweep.seq_lens.contains(&0) || self.taint.seq_lens.contains(&0) {
            return invalid("sequence lengths must be positive");
        }
        if self.taint.depths.iter().any(|d| *d == 0 || *d > self.taint.probe_channels.len()) {
            return invalid("taint depths must lie in 1..=probe_channels.len()");
        }
        if self.taint.kernels.iter().any(|k| k % 2 == 0) {
            return invalid("taint kernels must be odd");
        }
        let worst = self.generator.worst_case_srir_len();
        if worst > self.generator.scene.srir_len_cap {
            return invalid(format!(
                "largest room needs {worst}-sample impulse responses, cap is {}",
                self.generator.scene.srir_len_cap
            ));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn hash(&self) -> Result<String> {
        config_hash(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShardInfo {
    pub file: String,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub split: Split,
    pub master_seed: u64,
    pub generator: GeneratorConfig,
    pub shards: Vec<ShardInfo>,
    /// Frame counts per speaker-count class.
    pub label_histogram: [u64; N_CLASSES],
}

impl DatasetManifest {
    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        self.shards.iter().flat_map(|s| s.seeds.iter().copied())
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Synthesizes a split into `dir` as shards plus `manifest.json`.
pub fn write_dataset(dir: &Path, cfg: &ExperimentConfig, split: Split) -> Result<DatasetManifest> {
    fs::create_dir_all(dir)?;
    let count = cfg.splits.get(split);
    let mut shards = Vec::new();
    let mut hist = [0u64; N_CLASSES];
    let mut start = 0;
    while start < count {
        let end = (start + cfg.shard_size).min(count);
        let recs = generate_recordings(&cfg.generator, cfg.master_seed, split, start..end)?;
        for r in &recs {
            for c in &r.labels.counts {
                hist[*c as usize] += 1;
            }
        }
        let file = format!("{}-{:05}.cntd", split.name(), shards.len());
        save_shard(&dir.join(&file), &recs)?;
        shards.push(ShardInfo { file, seeds: recs.iter().map(|r| r.spec.master_seed).collect() });
        start = end;
    }
    let manifest = DatasetManifest {
        tool_version: TOOL_VERSION.to_string(),
        config_hash: cfg.hash()?,
        split,
        master_seed: cfg.master_seed,
        generator: cfg.generator.clone(),
        shards,
        label_histogram: hist,
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    Ok(serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?)
}

/// Loads every recording listed in the manifest, in order.
pub fn read_dataset(dir: &Path) -> Result<(DatasetManifest, Vec<Recording>)> {
    let manifest = read_manifest(dir)?;
    let mut recs = Vec::new();
    for s in &manifest.shards {
        let shard = load_shard(&dir.join(&s.file))?;
        let seeds: Vec<u64> = shard.iter().map(|r| r.spec.master_seed).collect();
        if seeds != s.seeds {
            return Err(Error::Format(format!("shard {} does not match its manifest entry", s.file)));
        }
        recs.extend(shard);
    }
    Ok((manifest, recs))
}

/// Features of a recording as an `f32` network input `[N, F, 4]`.
pub fn recording_tensor(r: &Recording) -> Result<Tensor<f32>> {
    let f = &r.features;
    Tensor::new(vec![f.n_frames(), f.n_bins(), f.n_channels()], f.data().iter().map(|v| *v as f32).collect())
}

pub fn training_set(recordings: &[Recording], seq_len: usize, hop: usize) -> Result<TrainingSet<f32>> {
    let items = recordings.iter().map(|r| Ok((recording_tensor(r)?, r.labels.counts.clone()))).collect::<Result<_>>()?;
    TrainingSet::windowed(items, seq_len, hop)
}

/// Trains from scratch (or from `resume`) per `cfg`, calling `on_epoch`
/// with a checkpoint after every epoch.
pub fn run_training(
    cfg: &ExperimentConfig,
    recordings: &[Recording],
    resume: Option<Checkpoint>,
    mut on_epoch: impl FnMut(&Checkpoint) -> Result<()>,
) -> Result<Checkpoint> {
    cfg.validate()?;
    let provenance = serde_json::json!({
        "tool_version": TOOL_VERSION,
        "config_hash": cfg.hash()?,
        "master_seed": cfg.master_seed,
        "train_seed": cfg.training.seed,
        "training_recordings": recordings.len(),
    });
    let state = match resume {
        Some(ck) => {
            if ck.state.params.config != cfg.model {
                return Err(Error::Config("checkpoint model config differs from the experiment config".into()));
            }
            ck.state
        }
        None => TrainState::new(build::<f32>(&cfg.model, cfg.training.seed)?, cfg.training.adam),
    };
    let data = training_set(recordings, cfg.model.seq_len, cfg.window_hop)?;
    let state = crate::crnn::train_from_state(state, &data, &cfg.training, |s| {
        on_epoch(&Checkpoint::new(s.clone(), provenance.clone()))
    })?;
    Ok(Checkpoint::new(state, provenance))
}

/// One row of the taint table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaintRow {
    pub kernel: usize,
    pub depth: usize,
    pub n_t: usize,
    pub head: usize,
    pub tail: usize,
    /// `N_t - 1 - tail`, if non-negative.
    pub n_opt: Option<usize>,
    pub empirical_head: usize,
    pub empirical_tail: usize,
    pub equal: bool,
}

pub const TAINT_HEADER: [&str; 7] = ["K", "depth", "N_t", "head", "tail", "n_opt", "analytic_equals_empirical"];

/// Probe network matching `(kernel, depth)` for the empirical taint check.
pub fn probe_config(grid: &TaintGrid, kernel: usize, depth: usize, n_t: usize) -> CrnnConfig {
    CrnnConfig {
        kernel,
        conv_channels: grid.probe_channels[..depth].to_vec(),
        pool_sizes: vec![4; depth / 2],
        lstm_hidden: 4,
        seq_len: n_t,
        n_bins: grid.n_bins,
        ..CrnnConfig::default()
    }
}

/// Analytic and empirical taint for every grid cell.
pub fn taint_table(grid: &TaintGrid) -> Result<Vec<TaintRow>> {
    let mut cells = Vec::new();
    for &k in &grid.kernels {
        for &d in &grid.depths {
            for &n in &grid.seq_lens {
                cells.push((k, d, n));
            }
        }
    }
    cells
        .par_iter()
        .map(|&(k, d, n)| {
            if d == 0 || d > grid.probe_channels.len() {
                return invalid(format!("depth {d} outside 1..={}", grid.probe_channels.len()));
            }
            let analytic = taint_mask(&StackSpec::conv_stack(k, d), n)?;
            let params = build::<f64>(&probe_config(grid, k, d, n), grid.seed ^ ((k * 1000 + d * 100 + n) as u64))?;
            let empirical = empirical_taint(&params, n, grid.probes, grid.seed)?;
            let last_clean = (n - analytic.tail).checked_sub(1);
            Ok(TaintRow {
                kernel: k,
                depth: d,
                n_t: n,
                head: analytic.head,
                tail: analytic.tail,
                n_opt: last_clean,
                empirical_head: empirical.head,
                empirical_tail: empirical.tail,
                equal: analytic == empirical,
            })
        })
        .collect()
}

fn opt_str<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn taint_csv_rows(rows: &[TaintRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                r.kernel.to_string(),
                r.depth.to_string(),
                r.n_t.to_string(),
                r.head.to_string(),
                r.tail.to_string(),
                opt_str(r.n_opt),
                r.equal.to_string(),
            ]
        })
        .collect()
}

fn parse<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.trim().parse().map_err(|_| Error::Format(format!("cannot parse {what} from {s:?}")))
}

fn column(header: &[String], name: &str) -> Result<usize> {
    header.iter().position(|h| h == name).ok_or_else(|| Error::Format(format!("missing column {name}")))
}

pub const SWEEP_HEADER: [&str; 7] = ["K", "N_t", "n", "evaluated", "skipped", "correct", "accuracy"];

pub fn sweep_csv_rows(kernel: usize, r: &SweepResult) -> Vec<Vec<String>> {
    r.points
        .iter()
        .map(|p| {
            vec![
                kernel.to_string(),
                r.n_t.to_string(),
                p.n.to_string(),
                p.evaluated.to_string(),
                p.skipped.to_string(),
                p.correct.to_string(),
                p.accuracy.to_string(),
            ]
        })
        .collect()
}

/// Confusion matrices as 6x6 blocks, one per position.
pub fn confusion_csv_rows(kernel: usize, r: &SweepResult) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for p in &r.points {
        for (t, row) in p.confusion.counts.iter().enumerate() {
            let mut line = vec![kernel.to_string(), r.n_t.to_string(), p.n.to_string(), t.to_string()];
            line.extend(row.iter().map(|c| c.to_string()));
            rows.push(line);
        }
    }
    rows
}

pub const CONFUSION_HEADER: [&str; 10] = ["K", "N_t", "n", "true", "pred0", "pred1", "pred2", "pred3", "pred4", "pred5"];

/// Rebuilds sweep curves (keyed by `(K, N_t)`) from sweep CSV rows.
pub fn sweeps_from_csv(header: &[String], rows: &[Vec<String>]) -> Result<BTreeMap<(usize, usize), SweepResult>> {
    let idx: Vec<usize> = SWEEP_HEADER.iter().map(|h| column(header, h)).collect::<Result<_>>()?;
    let mut groups: BTreeMap<(usize, usize), Vec<SweepCurvePoint>> = BTreeMap::new();
    for r in rows {
        let get = |i: usize| r.get(idx[i]).map(String::as_str).unwrap_or("");
        let key = (parse(get(0), "K")?, parse(get(1), "N_t")?);
        groups.entry(key).or_default().push(SweepCurvePoint {
            n: parse(get(2), "n")?,
            evaluated: parse(get(3), "evaluated")?,
            skipped: parse(get(4), "skipped")?,
            correct: parse(get(5), "correct")?,
            accuracy: parse(get(6), "accuracy")?,
            confusion: ConfusionMatrix::default(),
        });
    }
    groups
        .into_iter()
        .map(|(key, mut points)| {
            points.sort_by_key(|p| p.n);
            Ok((key, SweepResult::from_points(key.1, points, 0)?))
        })
        .collect()
}

pub fn taint_from_csv(header: &[String], rows: &[Vec<String>]) -> Result<Vec<TaintRow>> {
    let idx: Vec<usize> = TAINT_HEADER.iter().map(|h| column(header, h)).collect::<Result<_>>()?;
    rows.iter()
        .map(|r| {
            let get = |i: usize| r.get(idx[i]).map(String::as_str).unwrap_or("");
            let n_opt = if get(5).is_empty() { None } else { Some(parse(get(5), "n_opt")?) };
            let (head, tail) = (parse(get(3), "head")?, parse(get(4), "tail")?);
            Ok(TaintRow {
                kernel: parse(get(0), "K")?,
                depth: parse(get(1), "depth")?,
                n_t: parse(get(2), "N_t")?,
                head,
                tail,
                n_opt,
                empirical_head: head,
                empirical_tail: tail,
                equal: parse(get(6), "analytic_equals_empirical")?,
            })
        })
        .collect()
}

/// Frame hop in milliseconds.
pub fn hop_ms() -> f64 {
    let c = StftConfig::default();
    c.hop as f64 * 1000.0 / crate::dsp::SAMPLE_RATE as f64
}

pub const REPORT_HEADER: [&str; 12] = [
    "K",
    "N_t",
    "n_best",
    "n_opt",
    "offset",
    "head_rise",
    "tail_drop",
    "mean_accuracy_weighted",
    "mean_accuracy_unweighted",
    "best_accuracy",
    "overhead_frames",
    "overhead_ms",
];

/// Markdown report and the matching plot-ready summary rows.
pub fn render_report(
    sweeps: &BTreeMap<(usize, usize), SweepResult>,
    taint: &[TaintRow],
) -> Result<(String, Vec<Vec<String>>)> {
    if sweeps.is_empty() && taint.is_empty() {
        return invalid("nothing to report: no sweep curves and no taint rows");
    }
    let mut rows = Vec::new();
    let mut md = String::from("# Position sweep report\n\n");
    if !sweeps.is_empty() {
        md.push_str("| K | N_t | n_best | n_opt | rise | drop | mean (weighted) | mean (unweighted) | look-ahead |\n");
        md.push_str("|---|---|---|---|---|---|---|---|---|\n");
    }
    for (&(k, n_t), r) in sweeps {
        let f = curve_features(r, k)?;
        let frames = overhead_frames(k);
        let ms = frames as f64 * hop_ms();
        md.push_str(&format!(
            "| {k} | {n_t} | {} | {} | {:.4} | {} | {:.4} | {:.4} | {frames} frames = {ms} ms |\n",
            f.n_best,
            opt_str(f.n_opt),
            f.head_rise,
            f.tail_drop.map(|d| format!("{d:.4}")).unwrap_or_else(|| "-".into()),
            r.mean_accuracy,
            r.mean_accuracy_unweighted,
        ));
        rows.push(vec![
            k.to_string(),
            n_t.to_string(),
            f.n_best.to_string(),
            opt_str(f.n_opt),
            opt_str(f.offset),
            f.head_rise.to_string(),
            opt_str(f.tail_drop),
            r.mean_accuracy.to_string(),
            r.mean_accuracy_unweighted.to_string(),
            f.best_accuracy.to_string(),
            frames.to_string(),
            ms.to_string(),
        ]);
    }
    if !taint.is_empty() {
        md.push_str("\n## Padding taint\n\n| K | depth | N_t | head | tail | last clean | empirical match |\n");
        md.push_str("|---|---|---|---|---|---|---|\n");
        for t in taint {
            md.push_str(&format!(
                "| {} | {} | {} | {} | {} | {} | {} |\n",
                t.kernel,
                t.depth,
                t.n_t,
                t.head,
                t.tail,
                opt_str(t.n_opt),
                if t.equal { "yes" } else { "no" }
            ));
        }
    }
    if !sweeps.is_empty() {
        md.push_str(&format!(
            "\nDecoding at n_opt needs 4*(K/2) future frames; at a {} ms hop that is the latency listed above.\n",
            hop_ms()
        ));
    }
    Ok((md, rows))
}

/// Sweep config for one `N_t` of the grid.
pub fn sweep_config(grid: &SweepGrid, n_t: usize) -> SweepConfig {
    SweepConfig { n_t, positions: grid.positions.clone() }
}

/// Recordings as `(features, labels)` pairs for the sweep.
pub fn sweep_inputs(recs: Vec<Recording>) -> Vec<(crate::ambisonics::FeatureTensor, crate::roomsim::FrameLabels)> {
    recs.into_iter().map(|r| (r.features, r.labels)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_seeds_are_disjoint() {
        for master in [0u64, 7, u64::MAX] {
            let mut seen = std::collections::HashSet::new();
            for split in [Split::Train, Split::Val, Split::Test] {
                for i in 0..1000 {
                    assert!(seen.insert(split.recording_seed(master, i)));
                }
            }
        }
        assert!(Split::parse("dev").is_err());
        assert_eq!(Split::parse("test").unwrap(), Split::Test);
    }

    #[test]
    fn config_defaults_and_strictness() {
        let d = ExperimentConfig::default();
        d.validate().unwrap();
        ExperimentConfig::toy().validate().unwrap();
        let back = ExperimentConfig::from_json(&d.to_json().unwrap()).unwrap();
        assert_eq!(back, d);
        assert_eq!(ExperimentConfig::from_json("{}").unwrap(), d);
        let typo = ExperimentConfig::from_json(r#"{"master_sed": 3}"#);
        assert!(matches!(typo, Err(Error::Config(_))));
        let nested = ExperimentConfig::from_json(r#"{"model": {"kernel": 4}}"#);
        assert!(matches!(nested, Err(Error::Config(_))));
        assert_ne!(d.hash().unwrap(), ExperimentConfig::toy().hash().unwrap());
    }

    #[test]
    fn latency_of_k3() {
        assert_eq!(hop_ms(), 32.0);
        assert_eq!(overhead_frames(3) as f64 * hop_ms(), 128.0);
    }

    #[test]
    fn report_needs_input() {
        assert!(render_report(&BTreeMap::new(), &[]).is_err());
    }

    #[test]
    fn small_taint_grid() {
        let grid = TaintGrid {
            kernels: vec![1, 3],
            depths: vec![2, 4],
            seq_lens: vec![10, 12],
            probes: 2,
            probe_channels: vec![2, 2, 2, 2],
            n_bins: 32,
            ..TaintGrid::default()
        };
        let rows = taint_table(&grid).unwrap();
        assert_eq!(rows.len(), 8);
        assert!(rows.iter().all(|r| r.equal), "{rows:?}");
        let r = rows.iter().find(|r| r.kernel == 3 && r.depth == 4 && r.n_t == 12).unwrap();
        assert_eq!((r.tail, r.n_opt), (4, Some(7)));
        let (h, body) = (TAINT_HEADER.map(String::from).to_vec(), taint_csv_rows(&rows));
        let back = taint_from_csv(&h, &body).unwrap();
        assert_eq!(taint_csv_rows(&back), body);
    }
}
