use super::*;
use crate::neuralnet::gradcheck::{grad_check, random_tensor, Differentiable};

fn tiny(kernel: usize) -> CrnnConfig {
    CrnnConfig {
        kernel,
        conv_channels: vec![3, 2, 4, 2],
        pool_sizes: vec![2, 2],
        lstm_hidden: 5,
        seq_len: 6,
        n_bins: 16,
        ..CrnnConfig::default()
    }
}

fn small(kernel: usize, seq_len: usize) -> CrnnConfig {
    CrnnConfig {
        kernel,
        conv_channels: vec![4, 4, 8, 4],
        pool_sizes: vec![4, 4],
        lstm_hidden: 12,
        seq_len,
        n_bins: 64,
        ..CrnnConfig::default()
    }
}

fn input<T: Scalar>(cfg: &CrnnConfig, n_t: usize, seed: u64) -> Tensor<T> {
    let mut t = random_tensor(&[n_t, cfg.n_bins, cfg.n_channels], seed);
    t.data_mut().iter_mut().for_each(|v| *v = v.abs());
    t.cast()
}

#[test]
fn lstm_width_and_parameter_count() {
    let cfg = CrnnConfig::default();
    assert_eq!(cfg.pooled_bins(), 33);
    assert_eq!(cfg.lstm_input_width(), 2112);
    // 2368 + 18464 + 36992 + 73792 conv, 344480 LSTM, 246 dense
    assert_eq!(cfg.parameter_count(), 476_342);
    let p = build::<f32>(&cfg, 0).unwrap();
    assert_eq!(p.parameter_count(), 476_342);
    assert_eq!(p.named_tensors().len(), 13);
}

#[test]
fn config_rejects_bad_values() {
    let bad = [
        CrnnConfig { kernel: 4, ..CrnnConfig::default() },
        CrnnConfig { n_classes: 5, ..CrnnConfig::default() },
        CrnnConfig { pool_sizes: vec![4], ..CrnnConfig::default() },
        CrnnConfig { conv_channels: vec![], pool_sizes: vec![], ..CrnnConfig::default() },
        CrnnConfig { lstm_hidden: 0, ..CrnnConfig::default() },
    ];
    for c in bad {
        assert!(build::<f32>(&c, 0).is_err(), "{c:?}");
    }
    let err = serde_json::from_str::<CrnnConfig>(r#"{"kernal": 3}"#);
    assert!(err.is_err());
}

#[test]
fn init_scheme() {
    let p = build::<f64>(&CrnnConfig::default(), 7).unwrap();
    let h = 40;
    let b = p.lstms[0].bias.data();
    assert!(b[h..2 * h].iter().all(|v| *v == 1.0));
    assert!(b[..h].iter().chain(&b[2 * h..]).all(|v| *v == 0.0));
    let lim = 1.0 / (h as f64).sqrt();
    assert!(p.lstms[0].w_hidden.data().iter().all(|v| v.abs() <= lim));
    let glorot = (6.0f64 / (9.0 * 4.0 + 9.0 * 64.0)).sqrt();
    let w0 = p.convs[0].weight.data();
    assert!(w0.iter().all(|v| v.abs() <= glorot));
    assert!(w0.iter().any(|v| v.abs() > 0.9 * glorot));
    assert_eq!(p, build::<f64>(&CrnnConfig::default(), 7).unwrap());
    assert_ne!(p, build::<f64>(&CrnnConfig::default(), 8).unwrap());
}

#[test]
fn probabilities_are_rows_summing_to_one() {
    let cfg = CrnnConfig::default();
    let p = build::<f32>(&cfg, 1).unwrap();
    let probs = p.forward(&input(&cfg, 30, 2)).unwrap();
    assert_eq!(probs.shape(), [30, 6]);
    for row in probs.data().chunks(6) {
        assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-5);
        assert!(row.iter().all(|v| *v > 0.0));
    }
    assert_eq!(p.predict_counts(&input(&cfg, 30, 2)).unwrap().len(), 30);
}

#[test]
fn wrong_input_shape_rejected() {
    let cfg = tiny(3);
    let p = build::<f64>(&cfg, 0).unwrap();
    assert!(p.forward(&Tensor::zeros(&[6, 15, 4])).is_err());
    assert!(p.forward(&Tensor::zeros(&[6, 16, 3])).is_err());
    assert!(p.loss_and_grads(&input(&cfg, 6, 0), &[0; 5]).is_err());
}

#[test]
fn look_ahead_is_bounded_by_taint() {
    for k in [3, 5, 7] {
        let cfg = small(k, 20);
        let p = build::<f64>(&cfg, k as u64).unwrap();
        let bound = 2 * (k - 1);
        let x = input::<f64>(&cfg, 20, 1);
        let y = p.forward(&x).unwrap();
        for t in [0usize, 3, 7] {
            let first_free = t + bound + 1;
            let mut x2 = x.clone();
            let frame = cfg.n_bins * cfg.n_channels;
            for v in &mut x2.data_mut()[first_free * frame..] {
                *v += 0.7;
            }
            let y2 = p.forward(&x2).unwrap();
            assert_eq!(&y.data()[..(t + 1) * 6], &y2.data()[..(t + 1) * 6], "K={k} t={t}");

            let mut x3 = x.clone();
            for v in &mut x3.data_mut()[(t + bound) * frame..(t + bound + 1) * frame] {
                *v += 0.7;
            }
            let y3 = p.forward(&x3).unwrap();
            assert_ne!(&y.data()[t * 6..(t + 1) * 6], &y3.data()[t * 6..(t + 1) * 6], "K={k} t={t} tight");
        }
    }
}

#[test]
fn untrained_loss_near_ln6() {
    let cfg = small(3, 30);
    let mut losses = Vec::new();
    for seed in 0..6 {
        let p = build::<f32>(&cfg, seed).unwrap();
        let labels: Vec<u8> = (0..30).map(|i| ((i + seed as usize) % 6) as u8).collect();
        losses.push(p.loss_and_grads(&input(&cfg, 30, seed + 10), &labels).unwrap().loss);
    }
    let mean = losses.iter().sum::<f64>() / losses.len() as f64;
    assert!((mean - 6f64.ln()).abs() < 0.2, "{losses:?}");
}

struct CrnnProbe {
    params: CrnnParams<f64>,
    x: Tensor<f64>,
    labels: Vec<u8>,
}

impl Differentiable for CrnnProbe {
    fn arguments(&mut self) -> Vec<&mut [f64]> {
        self.params.tensors_mut().into_iter().map(|t| t.data_mut()).collect()
    }
    fn forward(&self) -> Tensor<f64> {
        Tensor::new(vec![1], vec![self.params.loss_and_grads(&self.x, &self.labels).unwrap().loss]).unwrap()
    }
    fn backward(&self, u: &Tensor<f64>) -> Vec<Vec<f64>> {
        let s = u.data()[0];
        let g = self.params.loss_and_grads(&self.x, &self.labels).unwrap();
        g.grads.into_iter().map(|t| t.data().iter().map(|v| v * s).collect()).collect()
    }
}

#[test]
fn end_to_end_gradient() {
    for seed in 0..3 {
        let cfg = tiny(3);
        let mut params = build::<f64>(&cfg, seed).unwrap();
        for c in &mut params.convs {
            c.bias = random_tensor(c.bias.shape(), seed + 40);
        }
        let mut probe = CrnnProbe {
            params,
            x: input(&cfg, 6, seed + 1),
            labels: (0..6).map(|i| ((i * 5 + seed as usize) % 6) as u8).collect(),
        };
        let report = grad_check(&mut probe, seed, 1e-6);
        assert!(report.max_rel_error < 1e-5, "seed {seed}: {report:?}");
    }
}

#[test]
fn named_round_trip() {
    let cfg = tiny(5);
    let p = build::<f32>(&cfg, 3).unwrap();
    let named: Vec<(String, Tensor<f32>)> = p.named_tensors().into_iter().map(|(n, t)| (n, t.clone())).collect();
    let mut reversed = named.clone();
    reversed.reverse();
    assert_eq!(CrnnParams::from_named(&cfg, reversed).unwrap(), p);

    let mut wrong = named.clone();
    wrong[0].1 = Tensor::zeros(&[1]);
    assert!(CrnnParams::from_named(&cfg, wrong).is_err());
    let mut missing = named;
    missing.pop();
    assert!(CrnnParams::<f32>::from_named(&cfg, missing).is_err());
}

/// Count-dependent pattern: a frame with `c` speakers lights up `c` bands.
fn patterned(cfg: &CrnnConfig, labels: &[u8], seed: u64) -> Tensor<f32> {
    let noise = random_tensor(&[labels.len(), cfg.n_bins, cfg.n_channels], seed);
    let band = cfg.n_bins / 6;
    let mut data = Vec::with_capacity(noise.len());
    for (t, &c) in labels.iter().enumerate() {
        for f in 0..cfg.n_bins {
            for ch in 0..cfg.n_channels {
                let on = (f / band) < c as usize;
                let n = noise.data()[(t * cfg.n_bins + f) * cfg.n_channels + ch].abs() * 0.3;
                data.push((n + if on { 1.0 } else { 0.0 }) as f32);
            }
        }
    }
    Tensor::new(vec![labels.len(), cfg.n_bins, cfg.n_channels], data).unwrap()
}

fn toy_set(cfg: &CrnnConfig, n: usize) -> TrainingSet<f32> {
    let mut seqs = Vec::new();
    for s in 0..n {
        let labels: Vec<u8> = (0..cfg.seq_len).map(|i| (((i / 3) + s) % 6) as u8).collect();
        seqs.push((patterned(cfg, &labels, s as u64), labels));
    }
    TrainingSet::from_sequences(seqs).unwrap()
}

#[test]
fn overfits_eight_sequences() {
    let cfg = small(3, 12);
    let data = toy_set(&cfg, 8);
    let tc = TrainConfig {
        epochs: 150,
        batch_size: 4,
        seed: 3,
        adam: crate::neuralnet::AdamConfig { lr: 3e-3, ..Default::default() },
        ..TrainConfig::default()
    };
    let state = train(build::<f32>(&cfg, 5).unwrap(), &data, &tc).unwrap();
    let last = state.history.last().unwrap();
    let mut correct = 0;
    for i in 0..data.len() {
        let (x, labels) = data.window(i).unwrap();
        let pred = state.params.predict_counts(&x).unwrap();
        correct += pred.iter().zip(labels).filter(|(a, b)| a == b).count();
    }
    let acc = correct as f64 / (data.len() * cfg.seq_len) as f64;
    assert!(acc >= 0.95, "accuracy {acc}, history tail {last:?}");
    assert!(state.history[0].loss > last.loss);
}

#[test]
fn training_is_reproducible_and_resumable() {
    let cfg = tiny(3);
    let data = toy_set(&cfg, 6);
    let tc = TrainConfig { epochs: 4, batch_size: 2, seed: 11, ..TrainConfig::default() };
    let a = train(build::<f32>(&cfg, 2).unwrap(), &data, &tc).unwrap();
    let b = train(build::<f32>(&cfg, 2).unwrap(), &data, &TrainConfig { parallel: false, ..tc.clone() }).unwrap();
    assert_eq!(a, b);

    let half = train(build::<f32>(&cfg, 2).unwrap(), &data, &TrainConfig { epochs: 2, ..tc.clone() }).unwrap();
    let resumed = train_from_state(half, &data, &tc, |_| Ok(())).unwrap();
    assert_eq!(resumed, a);
}

#[test]
fn one_step_moves_every_tensor() {
    let cfg = tiny(3);
    let data = toy_set(&cfg, 2);
    let p0 = build::<f32>(&cfg, 4).unwrap();
    let tc = TrainConfig { epochs: 1, batch_size: 2, ..TrainConfig::default() };
    let p1 = train(p0.clone(), &data, &tc).unwrap().params;
    for ((name, a), b) in p0.named_tensors().into_iter().zip(p1.tensors()) {
        assert_ne!(a, b, "{name} did not change");
    }
}

#[test]
fn non_finite_input_aborts() {
    let cfg = tiny(3);
    let labels = vec![0u8; 6];
    let mut x = input::<f32>(&cfg, 6, 0);
    x.data_mut()[5] = f32::NAN;
    let data = TrainingSet::from_sequences(vec![(x, labels)]).unwrap();
    let err = train(build::<f32>(&cfg, 0).unwrap(), &data, &TrainConfig { epochs: 1, ..TrainConfig::default() });
    assert!(matches!(err, Err(Error::Numeric(_))), "{err:?}");
}

#[test]
fn windowing() {
    let cfg = tiny(3);
    let labels: Vec<u8> = (0..20).map(|i| (i % 6) as u8).collect();
    let x = input::<f32>(&cfg, 20, 0);
    let set = TrainingSet::windowed(vec![(x.clone(), labels)], 6, 5).unwrap();
    assert_eq!(set.len(), 3);
    let (w, l) = set.window(2).unwrap();
    assert_eq!(l, &[4, 5, 0, 1, 2, 3]);
    let frame = 16 * 4;
    assert_eq!(w.data(), &x.data()[10 * frame..16 * frame]);
}
