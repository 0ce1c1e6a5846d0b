//! `spkcount`: synthesize scenes, train the counting network, run position
//! sweeps and taint analyses, and render reports.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use spkcount::analysis::optimal_position;
use spkcount::experiment::{
    confusion_csv_rows, read_dataset, render_report, run_training, sweep_config, sweep_csv_rows, sweep_inputs,
    sweeps_from_csv, taint_csv_rows, taint_from_csv, taint_table, write_dataset, ExperimentConfig, Split,
    CONFUSION_HEADER, REPORT_HEADER, SWEEP_HEADER, TAINT_HEADER,
};
use spkcount::harness::{curve_features, position_sweep};
use spkcount::persist::{config_hash, load_csv, save_csv, Checkpoint};
use spkcount::roomsim::synth_mixture;
use spkcount::wav::write_wav;
use spkcount::Error;

/// Environment variable overriding the worker thread count.
const THREADS_ENV: &str = "SPKCOUNT_THREADS";

#[derive(Parser)]
#[command(name = "spkcount", version, about = "Speaker-counting CRNN workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print a complete default experiment config as JSON.
    Defaults {
        /// Desk-scale toy preset instead of the full-size defaults.
        #[arg(long)]
        toy: bool,
    },
    /// Synthesize one dataset split into shards plus a manifest.
    Synth {
        #[arg(long)]
        config: PathBuf,
        /// train, val or test
        #[arg(long)]
        split: String,
        #[arg(long)]
        out: PathBuf,
        /// Also write the first N scenes as 4-channel WAV files.
        #[arg(long, default_value_t = 0)]
        wav: usize,
        #[command(flatten)]
        force: Force,
    },
    /// Train a model on a synthesized training split.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Continue from this checkpoint until the configured epoch count.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[command(flatten)]
        force: Force,
    },
    /// Accuracy as a function of decoding position, per checkpoint and N_t.
    Sweep {
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Window lengths to sweep; defaults to the config's sweep grid.
        #[arg(long, value_delimiter = ',')]
        seq_lens: Option<Vec<usize>>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        force: Force,
    },
    /// Analytic vs empirical padding taint over a (K, depth, N_t) grid.
    Taint {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',')]
        kernels: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        depths: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        seq_lens: Option<Vec<usize>>,
        #[arg(long)]
        probes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        force: Force,
    },
    /// Markdown and CSV summary of sweep and taint tables.
    Report {
        #[arg(long = "sweep")]
        sweeps: Vec<PathBuf>,
        #[arg(long)]
        taint: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        force: Force,
    },
}

#[derive(Args)]
struct Force {
    /// Overwrite existing outputs.
    #[arg(long)]
    force: bool,
}

/// Errors mapped onto the documented exit codes.
enum Failure {
    Config(String),
    Numeric(String),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Numeric(_) => Failure::Numeric(e.to_string()),
            Error::Io(_) | Error::Wav(_) | Error::Format(_) => Failure::Io(e.to_string()),
            Error::InvalidArgument(_) | Error::Shape(_) | Error::Config(_) | Error::Json(_) => {
                Failure::Config(e.to_string())
            }
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(f) = configure_threads() {
        return report(f);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report(f),
    }
}

fn report(f: Failure) -> ExitCode {
    let (code, msg) = match f {
        Failure::Config(m) => (2, m),
        Failure::Numeric(m) => (3, m),
        Failure::Io(m) => (4, m),
    };
    eprintln!("spkcount: {msg}");
    ExitCode::from(code)
}

fn configure_threads() -> CmdResult {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v.parse().map_err(|_| Failure::Config(format!("{THREADS_ENV}={v:?} is not a thread count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Config(format!("thread pool: {e}")))
}

fn run(cmd: Command) -> CmdResult {
    match cmd {
        Command::Defaults { toy } => {
            let cfg = if toy { ExperimentConfig::toy() } else { ExperimentConfig::default() };
            print!("{}", cfg.to_json()?);
            Ok(())
        }
        Command::Synth { config, split, out, wav, force } => cmd_synth(&config, &split, &out, wav, force.force),
        Command::Train { config, data, out, resume, force } => {
            cmd_train(&config, &data, &out, resume.as_deref(), force.force)
        }
        Command::Sweep { checkpoints, data, out, seq_lens, config, force } => {
            cmd_sweep(&checkpoints, &data, &out, seq_lens, config.as_deref(), force.force)
        }
        Command::Taint { out, kernels, depths, seq_lens, probes, seed, config, force } => {
            let mut grid = load_config(config.as_deref())?.taint;
            grid.kernels = kernels.unwrap_or(grid.kernels);
            grid.depths = depths.unwrap_or(grid.depths);
            grid.seq_lens = seq_lens.unwrap_or(grid.seq_lens);
            grid.probes = probes.unwrap_or(grid.probes);
            grid.seed = seed.unwrap_or(grid.seed);
            check_file_target(&out, force.force)?;
            let rows = taint_table(&grid)?;
            save_csv(&out, &config_hash(&grid)?, &TAINT_HEADER, &taint_csv_rows(&rows))?;
            let mismatches = rows.iter().filter(|r| !r.equal).count();
            println!("{} cells, {} analytic/empirical mismatches -> {}", rows.len(), mismatches, out.display());
            Ok(())
        }
        Command::Report { sweeps, taint, out, force } => cmd_report(&sweeps, taint.as_deref(), &out, force.force),
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, Failure> {
    match path {
        Some(p) => ExperimentConfig::load(p).map_err(|e| match e {
            Error::Io(io) => Failure::Io(format!("{}: {io}", p.display())),
            other => Failure::Config(format!("{}: {other}", p.display())),
        }),
        None => Ok(ExperimentConfig::default()),
    }
}

/// Refuses to reuse a non-empty output directory unless forced.
fn prepare_dir(dir: &Path, force: bool) -> CmdResult {
    if dir.exists() {
        let non_empty = fs::read_dir(dir)?.next().is_some();
        if non_empty && !force {
            return Err(Failure::Config(format!("{} exists and is not empty; pass --force", dir.display())));
        }
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

fn check_file_target(path: &Path, force: bool) -> CmdResult {
    if path.exists() && !force {
        return Err(Failure::Config(format!("{} exists; pass --force", path.display())));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(())
}

fn cmd_synth(config: &Path, split: &str, out: &Path, wav: usize, force: bool) -> CmdResult {
    let cfg = load_config(Some(config))?;
    let split = Split::parse(split)?;
    prepare_dir(out, force)?;
    fs::write(out.join("config.json"), cfg.to_json()?)?;
    let manifest = write_dataset(out, &cfg, split)?;
    if wav > 0 {
        let wav_dir = out.join("wav");
        fs::create_dir_all(&wav_dir)?;
        let (_, recs) = read_dataset(out)?;
        for (i, r) in recs.iter().take(wav).enumerate() {
            let (foa, _) = synth_mixture(&r.spec)?;
            let ch: Vec<&[f64]> = foa.channels().iter().map(|c| c.as_slice()).collect();
            write_wav(wav_dir.join(format!("{}-{i:05}.wav", split.name())), &ch)?;
        }
    }
    let n: usize = manifest.shards.iter().map(|s| s.seeds.len()).sum();
    println!("{n} {} scenes in {} shards -> {}", split.name(), manifest.shards.len(), out.display());
    Ok(())
}

const HISTORY_HEADER: [&str; 3] = ["epoch", "loss", "accuracy"];

fn cmd_train(config: &Path, data: &Path, out: &Path, resume: Option<&Path>, force: bool) -> CmdResult {
    let cfg = load_config(Some(config))?;
    let resume = resume.map(Checkpoint::load).transpose()?;
    if resume.is_none() {
        prepare_dir(out, force)?;
    } else {
        fs::create_dir_all(out)?;
    }
    fs::write(out.join("config.json"), cfg.to_json()?)?;
    let (_, recs) = read_dataset(data)?;
    let hash = cfg.hash()?;
    let ckpt_path = out.join("checkpoint.cntw");
    let write_history = |ck: &Checkpoint| -> spkcount::Result<()> {
        let rows: Vec<Vec<String>> = ck
            .state
            .history
            .iter()
            .map(|h| vec![h.epoch.to_string(), h.loss.to_string(), h.accuracy.to_string()])
            .collect();
        save_csv(&out.join("history.csv"), &hash, &HISTORY_HEADER, &rows)
    };
    let ck = run_training(&cfg, &recs, resume, |ck| {
        let h = ck.state.history.last().expect("called after an epoch");
        eprintln!("epoch {} loss {:.4} accuracy {:.4}", h.epoch, h.loss, h.accuracy);
        ck.save(&ckpt_path)?;
        write_history(ck)
    })?;
    ck.save(&ckpt_path)?;
    write_history(&ck)?;
    println!("trained {} epochs -> {}", ck.state.epoch, ckpt_path.display());
    Ok(())
}

#[derive(Serialize)]
struct SweepProvenance<'a> {
    checkpoints: Vec<String>,
    dataset_config_hash: &'a str,
    dataset_seeds: Vec<u64>,
    seq_lens: &'a [usize],
    positions: &'a Option<Vec<usize>>,
}

const SUMMARY_HEADER: [&str; 8] =
    ["K", "N_t", "n_best", "n_opt", "offset", "head_rise", "tail_drop", "mean_accuracy_weighted"];

fn cmd_sweep(
    checkpoints: &[PathBuf],
    data: &Path,
    out: &Path,
    seq_lens: Option<Vec<usize>>,
    config: Option<&Path>,
    force: bool,
) -> CmdResult {
    let grid = load_config(config)?.sweep;
    let seq_lens = seq_lens.unwrap_or_else(|| grid.seq_lens.clone());
    if seq_lens.is_empty() || seq_lens.contains(&0) {
        return Err(Failure::Config("seq_lens must be non-empty and positive".into()));
    }
    let models = checkpoints.iter().map(|p| Checkpoint::load(p)).collect::<spkcount::Result<Vec<_>>>()?;
    let (manifest, recs) = read_dataset(data)?;
    prepare_dir(out, force)?;
    let prov = SweepProvenance {
        checkpoints: models
            .iter()
            .map(|m| config_hash(&m.provenance).unwrap_or_default() + ":" + &m.state.epoch.to_string())
            .collect(),
        dataset_config_hash: &manifest.config_hash,
        dataset_seeds: manifest.seeds().collect(),
        seq_lens: &seq_lens,
        positions: &grid.positions,
    };
    let hash = config_hash(&prov)?;
    let inputs = sweep_inputs(recs);
    let mut summary = Vec::new();
    for m in &models {
        let k = m.params().config.kernel;
        for &n_t in &seq_lens {
            let r = position_sweep(m.params(), &inputs, &sweep_config(&grid, n_t))?;
            let tag = format!("K{k}_Nt{n_t}");
            save_csv(&out.join(format!("sweep_{tag}.csv")), &hash, &SWEEP_HEADER, &sweep_csv_rows(k, &r))?;
            save_csv(&out.join(format!("confusion_{tag}.csv")), &hash, &CONFUSION_HEADER, &confusion_csv_rows(k, &r))?;
            let f = curve_features(&r, k)?;
            let opt = |v: Option<String>| v.unwrap_or_default();
            summary.push(vec![
                k.to_string(),
                n_t.to_string(),
                f.n_best.to_string(),
                opt(f.n_opt.map(|v| v.to_string())),
                opt(f.offset.map(|v| v.to_string())),
                f.head_rise.to_string(),
                opt(f.tail_drop.map(|v| v.to_string())),
                r.mean_accuracy.to_string(),
            ]);
            println!(
                "K={k} N_t={n_t}: n_best={} n_opt={:?} rise={:.4} drop={:?} mean={:.4} (skipped frames at edges, never padded)",
                f.n_best,
                optimal_position(n_t, k),
                f.head_rise,
                f.tail_drop,
                r.mean_accuracy
            );
        }
    }
    save_csv(&out.join("summary.csv"), &hash, &SUMMARY_HEADER, &summary)?;
    let meta = serde_json::json!({
        "edge_policy": "frames without a full window at position n are skipped, not padded",
        "provenance": serde_json::to_value(&prov).map_err(Error::from)?,
        "config_hash": hash,
    });
    fs::write(out.join("meta.json"), serde_json::to_string_pretty(&meta).map_err(Error::from)? + "\n")?;
    Ok(())
}

fn cmd_report(sweeps: &[PathBuf], taint: Option<&Path>, out: &Path, force: bool) -> CmdResult {
    let mut curves = BTreeMap::new();
    let mut hashes = Vec::new();
    for p in sweeps {
        let (header, rows) = load_csv(p)?;
        hashes.push(config_hash(&rows)?);
        curves.extend(sweeps_from_csv(&header, &rows)?);
    }
    let taint_rows = match taint {
        Some(p) => {
            let (header, rows) = load_csv(p)?;
            hashes.push(config_hash(&rows)?);
            taint_from_csv(&header, &rows)?
        }
        None => Vec::new(),
    };
    let (md, rows) = render_report(&curves, &taint_rows)?;
    prepare_dir(out, force)?;
    let hash = config_hash(&hashes)?;
    fs::write(out.join("report.md"), md)?;
    save_csv(&out.join("summary.csv"), &hash, &REPORT_HEADER, &rows)?;
    println!("report for {} curves, {} taint rows -> {}", curves.len(), taint_rows.len(), out.display());
    Ok(())
}
