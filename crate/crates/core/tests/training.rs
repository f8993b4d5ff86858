use emi_core::dataset::synth::synth_split;
use emi_core::dataset::{batches, Dataset, SynthConfig};
use emi_core::linalg::Rng;
use emi_core::model::{backward_accumulate, forward, FusionModelConfig, FusionModelParams, Mode};
use emi_core::training::{adam_step, evaluate, mse_loss, train, AdamConfig, AdamState, TrainConfig};

fn tiny_model() -> FusionModelConfig {
    FusionModelConfig {
        input_dim: 80,
        hidden_dim: 8,
        mlp_hidden_dim: 5,
        use_global_vector: true,
        dropout_rate: 0.0,
    }
}

fn tiny_data(seed: u64) -> (Dataset, Dataset) {
    synth_split(&SynthConfig {
        n_samples: 60,
        feature_dim: 80,
        seq_len_min: 3,
        seq_len_max: 9,
        seed,
        ..SynthConfig::default()
    })
    .unwrap()
}

#[test]
fn repeated_batch_loss_is_non_increasing() {
    let cfg = tiny_model();
    let (train_set, _) = tiny_data(0);
    let batch = batches(&train_set, 16, &mut Rng::new(0), false).unwrap().next().unwrap();
    let mut params = FusionModelParams::init(&cfg, &mut Rng::new(1)).unwrap();
    let mut grads = params.zeros_like();
    let mut adam = AdamState::new(&params);
    let mut rng = Rng::new(2);
    let mut losses = Vec::new();
    for _ in 0..=50 {
        for (_, g) in grads.arrays_mut() {
            g.fill(0.0);
        }
        let mut total = 0.0;
        for (i, seq) in batch.frames.iter().enumerate() {
            let (pred, cache) = forward(seq, batch.valid_lens[i], &params, &cfg, Mode::Train, &mut rng).unwrap();
            let target: [f64; 6] = batch.targets.row(i).try_into().unwrap();
            let (loss, mut d) = mse_loss(&pred, &target).unwrap();
            total += loss / batch.len() as f64;
            d.iter_mut().for_each(|v| *v /= batch.len() as f64);
            backward_accumulate(&cache, &d, &params, &cfg, &mut grads).unwrap();
        }
        losses.push(total);
        adam_step(&mut params, &grads, &mut adam, 1e-4, &AdamConfig::default()).unwrap();
    }
    for w in losses.windows(2) {
        assert!(w[1] <= w[0], "loss rose: {} -> {}", w[0], w[1]);
    }
    assert!(losses[50] < losses[0]);
}

#[test]
fn same_seed_same_everything() {
    let (tr, va) = tiny_data(3);
    let cfg = FusionModelConfig {
        dropout_rate: 0.1,
        ..tiny_model()
    };
    let tc = TrainConfig {
        base_lr: 3e-3,
        epochs: 4,
        batch_size: 8,
        seed: 11,
        ..TrainConfig::default()
    };
    let a = train(&tr, &va, &cfg, &tc).unwrap();
    let b = train(&tr, &va, &cfg, &tc).unwrap();
    assert_eq!(a.history, b.history);
    assert!(a.best_params.bit_eq(&b.best_params));
    assert!(a.final_params.bit_eq(&b.final_params));

    let c = train(&tr, &va, &cfg, &TrainConfig { seed: 12, ..tc }).unwrap();
    assert!(!a.final_params.bit_eq(&c.final_params));
}

#[test]
fn best_params_reproduce_best_metric() {
    let (tr, va) = tiny_data(4);
    let cfg = tiny_model();
    let out = train(
        &tr,
        &va,
        &cfg,
        &TrainConfig {
            base_lr: 1e-2,
            epochs: 6,
            batch_size: 8,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let h = &out.history;
    assert_eq!(h.epochs[h.best_epoch].val.rho_val, h.best_metric);
    assert_eq!(evaluate(&out.best_params, &cfg, &va).unwrap().rho_val, h.best_metric);
    assert!(h.val_metrics().iter().all(|&m| m <= h.best_metric));
}

#[test]
fn stalled_metric_with_patience_one_stops_after_epoch_one() {
    // lr so small that no parameter can change, so every epoch scores the same.
    let (tr, va) = tiny_data(5);
    let cfg = tiny_model();
    let out = train(
        &tr,
        &va,
        &cfg,
        &TrainConfig {
            base_lr: 1e-300,
            epochs: 10,
            patience: 1,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    assert!(out.stopped_early);
    assert_eq!(out.history.epochs.len(), 2);
    assert_eq!(out.history.best_epoch, 0);
    assert_eq!(evaluate(&out.best_params, &cfg, &va).unwrap().rho_val, out.history.best_metric);
}

#[test]
fn fixed_epochs_run_to_the_end() {
    let (tr, va) = tiny_data(6);
    let out = train(
        &tr,
        &va,
        &tiny_model(),
        &TrainConfig {
            base_lr: 1e-300,
            epochs: 7,
            patience: 1,
            early_stopping: false,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    assert!(!out.stopped_early);
    assert_eq!(out.history.epochs.len(), 7);
    let lrs: Vec<f64> = out.history.epochs.iter().map(|e| e.lr).collect();
    assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(lrs[6], 0.0);
}

#[test]
fn train_rejects_width_mismatch() {
    let (tr, va) = tiny_data(7);
    let cfg = FusionModelConfig {
        input_dim: 81,
        ..tiny_model()
    };
    assert!(train(&tr, &va, &cfg, &TrainConfig::default()).is_err());
}
