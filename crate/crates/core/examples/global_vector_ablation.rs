//! Global-vector ablation on data whose signal lives only in the sequence
//! mean. Sequences are long (40-60 frames) and noisy, so the LSTM's short
//! memory sees a poor estimate of the mean while the pooled vector sees
//! all of it.
//!
//! ```text
//! cargo run --release --example global_vector_ablation -- 3
//! ```

use emi_core::dataset::synth::synth_split;
use emi_core::dataset::{SignalMode, SynthConfig};
use emi_core::model::{param_count, FusionModelConfig};
use emi_core::training::{train, TrainConfig};

fn main() -> emi_core::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let base = FusionModelConfig {
        hidden_dim: 32,
        mlp_hidden_dim: 32,
        ..FusionModelConfig::default()
    };
    let off = FusionModelConfig {
        use_global_vector: false,
        ..base
    };
    println!(
        "param_count on {} off {} (difference {})",
        param_count(&base),
        param_count(&off),
        param_count(&base) - param_count(&off)
    );

    let mut gaps = Vec::new();
    for seed in 0..seeds {
        let (train_set, val_set) = synth_split(&SynthConfig {
            n_samples: 1000,
            seq_len_min: 40,
            seq_len_max: 60,
            signal_mode: SignalMode::GlobalMean,
            noise_std: 1.0,
            seed,
            ..SynthConfig::default()
        })?;
        let tc = TrainConfig {
            epochs: 20,
            seed,
            ..TrainConfig::default()
        };
        let on_rho = train(&train_set, &val_set, &base, &tc)?.history.best_metric;
        let off_rho = train(&train_set, &val_set, &off, &tc)?.history.best_metric;
        println!("seed {seed}: on {on_rho:.4}  off {off_rho:.4}  gap {:+.4}", on_rho - off_rho);
        gaps.push(on_rho - off_rho);
    }
    println!("mean gap {:+.4}", gaps.iter().sum::<f64>() / gaps.len() as f64);
    Ok(())
}
