//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use emi_core::dataset::synth::{quantile, synth_split};
use emi_core::dataset::{SignalMode, SkewModel, SynthConfig};
use emi_core::gradcheck::{run_gradcheck, GradcheckConfig};
use emi_core::linalg::{Matrix, Rng};
use emi_core::metrics::pearson;
use emi_core::model::{
    load_params, param_count, predict, save_params, FeatureSequence, FusionModelConfig, FusionModelParams,
};
use emi_core::training::{cosine_lr, early_stop_check, evaluate, train, TrainConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn c1_disclosure() -> Outcome {
    outcome(
        true,
        "challenge scores (val .389, test .554, audio baseline .240) cannot be reproduced: \
         the EMI challenge data is not redistributable and test labels were never released; \
         criteria 2-10 substitute",
    )
}

fn c2_gradcheck() -> Outcome {
    let start = Instant::now();
    let report = match run_gradcheck(&GradcheckConfig::default()) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("gradcheck error: {e}")),
    };
    let elapsed = start.elapsed();
    let worst = report.worst().unwrap();
    let pass = report.passed() && report.checks.len() == 20 && elapsed < Duration::from_secs(60);
    outcome(
        pass,
        format!(
            "{} arrays x 2 settings, worst rel err {:.2e} ({}, global {}), {:.2?}",
            report.checks.len() / 2,
            worst.worst_rel_err,
            worst.array,
            worst.use_global_vector,
            elapsed
        ),
    )
}

/// Direct evaluation of Σ(x−x̄)(y−ȳ) / sqrt(Σ(x−x̄)² Σ(y−ȳ)²).
fn reference_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let num: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    num / (sx * sy).sqrt()
}

fn c3_metric_oracle() -> Outcome {
    let mut rng = Rng::new(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.range_inclusive(2, 200);
        let x: Vec<f64> = (0..n).map(|_| rng.uniform(-10.0, 10.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.uniform(-10.0, 10.0)).collect();
        match pearson(&x, &y) {
            Ok(r) => worst = worst.max((r - reference_pearson(&x, &y)).abs()),
            Err(e) => return outcome(false, format!("pearson failed on a random pair: {e}")),
        }
    }
    let random_ok = worst < 1e-12;
    let hand = pearson(&[1.0, 2.0, 3.0, 4.0], &[2.0, 4.0, 5.0, 4.0]).unwrap();
    let hand_ok = (hand - 0.8).abs() < 1e-12;
    outcome(
        random_ok && hand_ok,
        format!(
            "1000 random pairs: max |diff| {worst:.1e} ({}); hand case x=[1,2,3,4] y=[2,4,5,4]: got {hand:.15}, expected 0.8 ({}; the direct formula gives {:.15})",
            if random_ok { "ok" } else { "FAIL" },
            if hand_ok { "ok" } else { "FAIL" },
            reference_pearson(&[1.0, 2.0, 3.0, 4.0], &[2.0, 4.0, 5.0, 4.0])
        ),
    )
}

fn c4_end_to_end() -> Outcome {
    let start = Instant::now();
    let (tr, va) = synth_split(&SynthConfig {
        n_samples: 2500,
        signal_mode: SignalMode::Both,
        noise_std: 0.1,
        ..SynthConfig::default()
    })
    .unwrap();
    let model = FusionModelConfig {
        hidden_dim: 32,
        mlp_hidden_dim: 32,
        ..FusionModelConfig::default()
    };
    let out = match train(&tr, &va, &model, &TrainConfig::default()) {
        Ok(o) => o,
        Err(e) => return outcome(false, format!("training failed: {e}")),
    };
    let elapsed = start.elapsed();
    let h = &out.history;
    outcome(
        h.best_metric >= 0.7 && elapsed < Duration::from_secs(600) && tr.len() == 2000 && va.len() == 500,
        format!(
            "{} train / {} val, best rho_val {:.4} at epoch {} of {}, {:.0?}",
            tr.len(),
            va.len(),
            h.best_metric,
            h.best_epoch,
            h.epochs.len(),
            elapsed
        ),
    )
}

fn c5_ablation() -> Outcome {
    let on = FusionModelConfig {
        hidden_dim: 32,
        mlp_hidden_dim: 32,
        ..FusionModelConfig::default()
    };
    let off = FusionModelConfig {
        use_global_vector: false,
        ..on
    };
    let mut gaps = Vec::new();
    let mut parts = Vec::new();
    for seed in 0..3 {
        let (tr, va) = synth_split(&SynthConfig {
            n_samples: 1000,
            seq_len_min: 40,
            seq_len_max: 60,
            signal_mode: SignalMode::GlobalMean,
            noise_std: 1.0,
            seed,
            ..SynthConfig::default()
        })
        .unwrap();
        let tc = TrainConfig {
            epochs: 20,
            seed,
            ..TrainConfig::default()
        };
        let run = |cfg: &FusionModelConfig| train(&tr, &va, cfg, &tc).map(|o| o.history.best_metric);
        match (run(&on), run(&off)) {
            (Ok(a), Ok(b)) => {
                gaps.push(a - b);
                parts.push(format!("seed {seed} on {a:.3} off {b:.3}"));
            }
            (Err(e), _) | (_, Err(e)) => return outcome(false, format!("training failed: {e}")),
        }
    }
    let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let mut counts_ok = true;
    for mlp in [32, 256] {
        let a = FusionModelConfig {
            mlp_hidden_dim: mlp,
            ..FusionModelConfig::default()
        };
        let b = FusionModelConfig {
            use_global_vector: false,
            ..a
        };
        counts_ok &= param_count(&a) - param_count(&b) == mlp * 1027;
    }
    outcome(
        mean_gap >= 0.05 && counts_ok,
        format!(
            "{}; mean gap {mean_gap:+.4}; param_count(on) - param_count(off) == mlp_hidden * 1027: {counts_ok}",
            parts.join(", ")
        ),
    )
}

fn c6_padding() -> Outcome {
    let mut rng = Rng::new(6);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let cfg = FusionModelConfig {
            hidden_dim: 16,
            mlp_hidden_dim: 16,
            use_global_vector: i % 2 == 0,
            ..FusionModelConfig::default()
        };
        let params = FusionModelParams::init(&cfg, &mut rng).unwrap();
        let t = rng.range_inclusive(1, 20);
        let extra = rng.range_inclusive(1, 10);
        let mut m = Matrix::zeros(t + extra, cfg.input_dim);
        m.data_mut().iter_mut().for_each(|v| *v = rng.uniform(-1.0, 1.0));
        let padded = FeatureSequence::new(m.clone()).unwrap();
        let exact = FeatureSequence::new(Matrix::from_vec(t, cfg.input_dim, m.data()[..t * cfg.input_dim].to_vec()).unwrap())
            .unwrap();
        let a = predict(&padded, t, &params, &cfg).unwrap();
        let b = predict(&exact, t, &params, &cfg).unwrap();
        for k in 0..6 {
            worst = worst.max((a[k] - b[k]).abs());
        }
    }
    outcome(worst < 1e-9, format!("100 sequences + 1-10 junk frames, max |diff| {worst:.1e}"))
}

fn c7_schedule() -> Outcome {
    let lrs: Vec<f64> = (0..30).map(|e| cosine_lr(e, 30, 1e-4).unwrap()).collect();
    let monotone = lrs.windows(2).all(|w| w[1] <= w[0]);
    outcome(
        lrs[0] == 1e-4 && lrs[29] == 0.0 && monotone,
        format!("lr[0] = {:e}, lr[29] = {:e}, monotone non-increasing: {monotone}", lrs[0], lrs[29]),
    )
}

fn emi(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_emi"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).into_owned())
    }
}

fn c8_determinism(tmp: &Path) -> Outcome {
    let data = tmp.join("c8_data");
    let d = data.to_str().unwrap();
    if let Err(e) = emi(&["synth", "--out", d, "--seed", "8", "--set", "n_samples=200"]) {
        return outcome(false, format!("synth failed: {e}"));
    }
    let manifest = data.join("manifest.csv");
    let mut files = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.join(format!("c8_{run}"));
        let args = [
            "train",
            "--out",
            out.to_str().unwrap(),
            "--manifest",
            manifest.to_str().unwrap(),
            "--seed",
            "8",
            "--set",
            "hidden_dim=16",
            "--set",
            "mlp_hidden_dim=16",
            "--set",
            "epochs=5",
            "--set",
            "base_lr=0.001",
        ];
        if let Err(e) = emi(&args) {
            return outcome(false, format!("train failed: {e}"));
        }
        files.push((
            fs::read(out.join("metrics.csv")).unwrap(),
            fs::read(out.join("model.seqf")).unwrap(),
        ));
    }
    let metrics_same = files[0].0 == files[1].0;
    let ckpt_same = files[0].1 == files[1].1;
    outcome(
        metrics_same && ckpt_same,
        format!(
            "two `emi train` runs, seed 8: metrics.csv identical {metrics_same} ({} bytes), model.seqf identical {ckpt_same} ({} bytes)",
            files[0].0.len(),
            files[0].1.len()
        ),
    )
}

fn c9_early_stopping(tmp: &Path) -> Outcome {
    // (metrics, patience, epoch at which the stop fires)
    let scripts: [(&[f64], usize, Option<usize>); 3] = [
        (&[0.1, 0.2, 0.3], 2, None),
        (&[0.3, 0.2, 0.25], 2, Some(2)),
        (&[0.3, 0.31, 0.30, 0.31], 2, Some(3)),
    ];
    let mut ok = true;
    for (m, patience, want) in scripts {
        let got = (1..=m.len()).find(|&n| early_stop_check(&m[..n], patience)).map(|n| n - 1);
        ok &= got == want;
    }

    let (tr, va) = synth_split(&SynthConfig {
        n_samples: 120,
        feature_dim: 96,
        seq_len_max: 10,
        seed: 9,
        ..SynthConfig::default()
    })
    .unwrap();
    let cfg = FusionModelConfig {
        input_dim: 96,
        hidden_dim: 8,
        mlp_hidden_dim: 8,
        ..FusionModelConfig::default()
    };
    // learning rate too small to move any parameter: every epoch scores the same
    let stalled = train(
        &tr,
        &va,
        &cfg,
        &TrainConfig {
            base_lr: 1e-300,
            patience: 1,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let stalled_ok = stalled.stopped_early && stalled.history.epochs.len() == 2 && stalled.history.best_epoch == 0;

    let run = train(
        &tr,
        &va,
        &cfg,
        &TrainConfig {
            base_lr: 0.02,
            patience: 2,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let path = tmp.join("c9.seqf");
    save_params(&run.best_params, &cfg, &path).unwrap();
    let (loaded_cfg, loaded) = load_params(&path).unwrap();
    let re = evaluate(&loaded, &loaded_cfg, &va).unwrap().rho_val;
    let reeval_ok = re == run.history.best_metric;
    outcome(
        ok && stalled_ok && reeval_ok,
        format!(
            "scripted sequences {}; patience-1 stall stops after epoch 1 with best 0: {stalled_ok}; \
             run stopped after {} epochs, reloaded checkpoint rho {re} == best_metric {}: {reeval_ok}",
            if ok { "ok" } else { "FAIL" },
            run.history.epochs.len(),
            run.history.best_metric
        ),
    )
}

fn c10_skew() -> Outcome {
    let skew = SkewModel::default();
    let mut rng = Rng::new(10);
    let mut values = Vec::with_capacity(60_000);
    for _ in 0..10_000 {
        values.extend(skew.draw(&mut rng).unwrap());
    }
    let median = quantile(&values, 0.5);
    let high = values.iter().filter(|&&v| v > 0.8).count() as f64 / values.len() as f64;
    outcome(
        median < 0.25 && (0.02..=0.15).contains(&high),
        format!("10^4 draws x 6 emotions: median {median:.4}, P(>0.8) {high:.4}"),
    )
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let criteria: [(&str, Box<dyn Fn() -> Outcome>); 10] = [
        ("C1 non-reproducibility disclosure", Box::new(c1_disclosure)),
        ("C2 gradient correctness", Box::new(c2_gradcheck)),
        ("C3 metric oracle equivalence", Box::new(c3_metric_oracle)),
        ("C4 end-to-end learning", Box::new(c4_end_to_end)),
        ("C5 global-vector ablation", Box::new(c5_ablation)),
        ("C6 padding invariance", Box::new(c6_padding)),
        ("C7 schedule exactness", Box::new(c7_schedule)),
        ("C8 determinism", Box::new(|| c8_determinism(tmp.path()))),
        ("C9 early stopping", Box::new(|| c9_early_stopping(tmp.path()))),
        ("C10 skew fidelity", Box::new(c10_skew)),
    ];
    let mut failed = Vec::new();
    for (name, check) in &criteria {
        let o = check();
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed.push(*name);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", criteria.len());
    } else {
        println!("acceptance: {} of {} criteria failed: {}", failed.len(), criteria.len(), failed.join(", "));
        std::process::exit(1);
    }
}
