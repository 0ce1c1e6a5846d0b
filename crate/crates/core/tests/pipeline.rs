use spkcount::analysis::{optimal_position, taint_mask};
use spkcount::experiment::{
    generate_recordings, read_dataset, run_training, sweep_inputs, taint_table, write_dataset, ExperimentConfig, Split,
    TaintGrid,
};
use spkcount::harness::{curve_features, position_sweep, SweepConfig};

fn tiny() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::toy();
    cfg.generator.scene_duration_s = 2.0;
    cfg.generator.min_activity_s = 0.5;
    cfg.splits.train = 4;
    cfg.splits.test = 2;
    cfg.shard_size = 3;
    cfg.model.conv_channels = vec![2, 2, 2, 2];
    cfg.model.lstm_hidden = 4;
    cfg.model.seq_len = 12;
    cfg.window_hop = 12;
    cfg.training.epochs = 2;
    cfg.training.batch_size = 4;
    cfg
}

#[test]
fn dataset_on_disk_equals_in_memory() {
    let cfg = tiny();
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_dataset(dir.path(), &cfg, Split::Train).unwrap();
    assert_eq!(manifest.shards.len(), 2);
    let (_, from_disk) = read_dataset(dir.path()).unwrap();
    let in_memory = generate_recordings(&cfg.generator, cfg.master_seed, Split::Train, 0..4).unwrap();
    assert_eq!(from_disk, in_memory);
}

#[test]
fn train_then_sweep_is_deterministic() {
    let cfg = tiny();
    let train = generate_recordings(&cfg.generator, 1, Split::Train, 0..4).unwrap();
    let test = generate_recordings(&cfg.generator, 1, Split::Test, 0..2).unwrap();
    let mut epochs = 0;
    let a = run_training(&cfg, &train, None, |_| {
        epochs += 1;
        Ok(())
    })
    .unwrap();
    assert_eq!(epochs, 2);
    let b = run_training(&cfg, &train, None, |_| Ok(())).unwrap();
    assert_eq!(a, b);

    let inputs = sweep_inputs(test);
    let r1 = position_sweep(a.params(), &inputs, &SweepConfig::new(12)).unwrap();
    let r2 = position_sweep(b.params(), &inputs, &SweepConfig::new(12)).unwrap();
    assert_eq!(r1, r2);
    assert_eq!(r1.points.len(), 12);
    let evaluated = r1.points[0].evaluated;
    assert!(r1.points.iter().all(|p| p.evaluated == evaluated && p.confusion.total() == evaluated));

    let f = curve_features(&r1, 3).unwrap();
    assert_eq!(f.n_opt, optimal_position(12, 3));
    assert_eq!(f.n_opt, Some(12 - 1 - taint_mask(&cfg.model.stack_spec(), 12).unwrap().tail));
}

#[test]
fn small_taint_grid_agrees() {
    let grid = TaintGrid { kernels: vec![3, 5], depths: vec![2, 4], seq_lens: vec![20], probes: 2, ..TaintGrid::default() };
    let rows = taint_table(&grid).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.equal));
    let k5 = rows.iter().find(|r| r.kernel == 5 && r.depth == 4).unwrap();
    assert_eq!((k5.head, k5.tail, k5.n_opt), (8, 8, Some(11)));
}
