//! Train briefly, save a checkpoint, reload it and confirm the reloaded
//! model predicts bit-for-bit the same values.

use emi_core::dataset::synth::synth_split;
use emi_core::dataset::SynthConfig;
use emi_core::model::{load_params, save_params, FusionModelConfig};
use emi_core::training::{evaluate, predict_dataset, train, TrainConfig};

fn main() -> emi_core::Result<()> {
    let (train_set, val_set) = synth_split(&SynthConfig {
        n_samples: 120,
        feature_dim: 96,
        ..SynthConfig::default()
    })?;
    let cfg = FusionModelConfig {
        input_dim: 96,
        hidden_dim: 12,
        mlp_hidden_dim: 16,
        ..FusionModelConfig::default()
    };
    let out = train(
        &train_set,
        &val_set,
        &cfg,
        &TrainConfig {
            base_lr: 3e-3,
            epochs: 5,
            ..TrainConfig::default()
        },
    )?;

    let path = std::env::temp_dir().join("emi_example.seqf");
    save_params(&out.best_params, &cfg, &path)?;
    let bytes = std::fs::metadata(&path).map_err(|e| emi_core::Error::Io { path: path.clone(), source: e })?.len();
    let (loaded_cfg, loaded) = load_params(&path)?;
    println!("{}: {bytes} bytes, config restored: {}", path.display(), loaded_cfg == cfg);

    let a = predict_dataset(&out.best_params, &cfg, &val_set)?;
    let b = predict_dataset(&loaded, &loaded_cfg, &val_set)?;
    println!("identical predictions: {}", a.data() == b.data());
    println!(
        "best epoch {} rho {:.4}, reloaded rho {:.4}",
        out.history.best_epoch,
        out.history.best_metric,
        evaluate(&loaded, &loaded_cfg, &val_set)?.rho_val
    );
    Ok(())
}
