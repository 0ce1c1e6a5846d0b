use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spkcount::experiment::{read_manifest, ExperimentConfig};
use spkcount::persist::Checkpoint;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spkcount"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::toy();
    cfg.generator.scene_duration_s = 2.0;
    cfg.generator.min_activity_s = 0.3;
    cfg.splits.train = 5;
    cfg.splits.test = 3;
    cfg.shard_size = 2;
    cfg.model.conv_channels = vec![2, 2, 2, 2];
    cfg.model.lstm_hidden = 4;
    cfg.model.seq_len = 10;
    cfg.window_hop = 10;
    cfg.training.epochs = 4;
    cfg.training.batch_size = 4;
    cfg
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, cfg.to_json().unwrap()).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn defaults_round_trip() {
    for args in [&["defaults"][..], &["defaults", "--toy"][..]] {
        let out = ok(args);
        ExperimentConfig::from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    }
}

#[test]
fn bad_config_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, r#"{"generator": {"max_speaker": 3}}"#).unwrap();
    let out = run(&["synth", "--config", s(&cfg), "--split", "train", "--out", s(&tmp.path().join("d"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("max_speaker"));

    let good = write_config(tmp.path(), &small_config());
    let out = run(&["synth", "--config", s(&good), "--split", "dev", "--out", s(&tmp.path().join("d"))]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(&["synth", "--config", s(&tmp.path().join("missing.json")), "--split", "train", "--out", "x"]);
    assert_eq!(out.status.code(), Some(4));

    let out = bin().env("SPKCOUNT_THREADS", "many").args(["defaults"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_train_sweep_report_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let cfg = write_config(root, &small_config());
    let train = root.join("train");
    let test = root.join("test");

    ok(&["synth", "--config", s(&cfg), "--split", "train", "--out", s(&train), "--wav", "1"]);
    ok(&["synth", "--config", s(&cfg), "--split", "test", "--out", s(&test)]);
    assert!(train.join("wav/train-00000.wav").exists());

    // deterministic shards; refuses to overwrite without --force
    let again = root.join("train2");
    ok(&["synth", "--config", s(&cfg), "--split", "train", "--out", s(&again)]);
    assert_eq!(dir_bytes(&train), dir_bytes(&again));
    let out = run(&["synth", "--config", s(&cfg), "--split", "train", "--out", s(&train)]);
    assert_eq!(out.status.code(), Some(2));
    ok(&["synth", "--config", s(&cfg), "--split", "train", "--out", s(&train), "--force"]);

    let mt = read_manifest(&train).unwrap();
    let ms = read_manifest(&test).unwrap();
    assert_eq!(mt.seeds().count(), 5);
    assert!(mt.seeds().all(|a| ms.seeds().all(|b| a != b)));

    // resume after 2 epochs matches an uninterrupted 4-epoch run
    let full = root.join("full");
    ok(&["train", "--config", s(&cfg), "--data", s(&train), "--out", s(&full)]);
    let mut two = small_config();
    two.training.epochs = 2;
    let cfg2 = root.join("two.json");
    fs::write(&cfg2, two.to_json().unwrap()).unwrap();
    let part = root.join("part");
    ok(&["train", "--config", s(&cfg2), "--data", s(&train), "--out", s(&part)]);
    let resumed = root.join("resumed");
    ok(&[
        "train",
        "--config",
        s(&cfg),
        "--data",
        s(&train),
        "--out",
        s(&resumed),
        "--resume",
        s(&part.join("checkpoint.cntw")),
    ]);
    let a = Checkpoint::load(&full.join("checkpoint.cntw")).unwrap();
    let b = Checkpoint::load(&resumed.join("checkpoint.cntw")).unwrap();
    assert_eq!(a.state, b.state);
    let history = fs::read_to_string(full.join("history.csv")).unwrap();
    assert!(history.starts_with("# spkcount "));
    assert_eq!(history.lines().count(), 2 + 4);

    let sweep = root.join("sweep");
    let ckpt = full.join("checkpoint.cntw");
    ok(&["sweep", "--checkpoint", s(&ckpt), "--data", s(&test), "--out", s(&sweep), "--seq-lens", "10,20"]);
    let csv = fs::read_to_string(sweep.join("sweep_K3_Nt20.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + 20);
    assert!(sweep.join("confusion_K3_Nt10.csv").exists());
    let sweep2 = root.join("sweep2");
    ok(&["sweep", "--checkpoint", s(&ckpt), "--data", s(&test), "--out", s(&sweep2), "--seq-lens", "10,20"]);
    assert_eq!(dir_bytes(&sweep), dir_bytes(&sweep2));

    let taint = root.join("taint.csv");
    ok(&["taint", "--out", s(&taint), "--kernels", "3", "--depths", "4", "--seq-lens", "30", "--probes", "2"]);
    let t = fs::read_to_string(&taint).unwrap();
    assert!(t.lines().any(|l| l == "3,4,30,4,4,25,true"), "{t}");

    let report = root.join("report");
    let sweep_csv = sweep.join("sweep_K3_Nt20.csv");
    ok(&["report", "--sweep", s(&sweep_csv), "--taint", s(&taint), "--out", s(&report)]);
    let md = fs::read_to_string(report.join("report.md")).unwrap();
    assert!(md.contains("4 frames = 128 ms"), "{md}");
    let report2 = root.join("report2");
    ok(&["report", "--sweep", s(&sweep_csv), "--taint", s(&taint), "--out", s(&report2)]);
    assert_eq!(dir_bytes(&report), dir_bytes(&report2));

    let out = run(&["report", "--out", s(&root.join("empty"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn divergent_training_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.splits.train = 2;
    cfg.training.adam.lr = 1e300;
    cfg.training.clip_norm = None;
    cfg.training.epochs = 20;
    let path = write_config(tmp.path(), &cfg);
    let data = tmp.path().join("d");
    ok(&["synth", "--config", s(&path), "--split", "train", "--out", s(&data)]);
    let out = run(&["train", "--config", s(&path), "--data", s(&data), "--out", s(&tmp.path().join("m"))]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("batch"));
}
