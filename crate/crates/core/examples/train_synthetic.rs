//! Train the fusion model on an in-memory synthetic dataset and report
//! validation ρ per epoch.
//!
//! ```text
//! cargo run --release --example train_synthetic -- --n-samples 2500 --hidden 32
//! ```

use std::time::Instant;

use clap::Parser;
use emi_core::dataset::synth::synth_split;
use emi_core::dataset::{SignalMode, SynthConfig};
use emi_core::model::{param_count, FusionModelConfig};
use emi_core::training::{train_with_observer, TrainConfig};

#[derive(Parser)]
struct Args {
    #[arg(long, default_value_t = 2500)]
    n_samples: usize,
    #[arg(long, default_value_t = 32)]
    hidden: usize,
    #[arg(long, default_value_t = 32)]
    mlp_hidden: usize,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value = "both")]
    signal: SignalMode,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 1.0)]
    gain: f64,
    #[arg(long, default_value_t = 6)]
    seq_min: usize,
    #[arg(long, default_value_t = 20)]
    seq_max: usize,
    #[arg(long)]
    no_global_vector: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> emi_core::Result<()> {
    let args = Args::parse();
    let synth = SynthConfig {
        n_samples: args.n_samples,
        signal_mode: args.signal,
        noise_std: args.noise,
        signal_gain: args.gain,
        seq_len_min: args.seq_min,
        seq_len_max: args.seq_max,
        seed: args.seed,
        ..SynthConfig::default()
    };
    let (train_set, val_set) = synth_split(&synth)?;
    let model = FusionModelConfig {
        hidden_dim: args.hidden,
        mlp_hidden_dim: args.mlp_hidden,
        use_global_vector: !args.no_global_vector,
        ..FusionModelConfig::default()
    };
    let train = TrainConfig {
        base_lr: args.lr,
        epochs: args.epochs,
        seed: args.seed,
        ..TrainConfig::default()
    };
    println!(
        "{} train / {} val, {} parameters",
        train_set.len(),
        val_set.len(),
        param_count(&model)
    );

    let start = Instant::now();
    let outcome = train_with_observer(&train_set, &val_set, &model, &train, |r| {
        println!(
            "epoch {:>2}  lr {:.2e}  mse {:.5}  val rho {:.4}  ({:.0?})",
            r.epoch,
            r.lr,
            r.train_mse,
            r.val.rho_val,
            start.elapsed()
        );
    })?;
    let h = &outcome.history;
    println!("best val rho {:.4} at epoch {}", h.best_metric, h.best_epoch);
    Ok(())
}
