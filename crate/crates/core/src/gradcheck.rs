//! Finite-difference verification of [`backward`](crate::model::backward).
//!
//! Every scalar of every parameter array is perturbed by `±h`; the central
//! difference of the MSE loss is compared with the analytic gradient using
//! `|a − fd| / max(|a|, |fd|, 1e-8)`.

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Rng};
use crate::model::{
    backward, forward, FeatureSequence, FusionModelConfig, FusionModelParams, Mode, NUM_EMOTIONS,
};
use crate::training::mse_loss;

pub const DEFAULT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub mlp_hidden_dim: usize,
    pub seq_len: usize,
    pub step: f64,
    pub tolerance: f64,
    pub seed: u64,
    /// Test hook: perturb the analytic gradient of this array before
    /// comparing, to prove the checker notices.
    pub corrupt_array: Option<String>,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            input_dim: 13,
            hidden_dim: 8,
            mlp_hidden_dim: 5,
            seq_len: 5,
            step: 1e-5,
            tolerance: DEFAULT_TOLERANCE,
            seed: 0,
            corrupt_array: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayCheck {
    pub use_global_vector: bool,
    pub array: &'static str,
    pub scalars: usize,
    pub worst_rel_err: f64,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub checks: Vec<ArrayCheck>,
}

impl GradcheckReport {
    pub fn worst(&self) -> Option<&ArrayCheck> {
        self.checks
            .iter()
            .max_by(|a, b| a.worst_rel_err.total_cmp(&b.worst_rel_err))
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.worst_rel_err < self.tolerance)
    }

    /// `Err(Gradcheck)` naming the worst offending array, if any.
    pub fn into_result(self) -> Result<Self> {
        if let Some(bad) = self
            .checks
            .iter()
            .filter(|c| c.worst_rel_err >= self.tolerance)
            .max_by(|a, b| a.worst_rel_err.total_cmp(&b.worst_rel_err))
        {
            return Err(Error::Gradcheck {
                array: format!(
                    "{} (global vector {})",
                    bad.array,
                    if bad.use_global_vector { "on" } else { "off" }
                ),
                rel_err: bad.worst_rel_err,
                tol: self.tolerance,
            });
        }
        Ok(self)
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Runs the check for both global-vector settings.
pub fn run_gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    let mut checks = Vec::new();
    for use_global_vector in [false, true] {
        checks.extend(check_one(cfg, use_global_vector)?);
    }
    Ok(GradcheckReport {
        tolerance: cfg.tolerance,
        checks,
    })
}

fn check_one(cfg: &GradcheckConfig, use_global_vector: bool) -> Result<Vec<ArrayCheck>> {
    let model_cfg = FusionModelConfig {
        input_dim: cfg.input_dim,
        hidden_dim: cfg.hidden_dim,
        mlp_hidden_dim: cfg.mlp_hidden_dim,
        use_global_vector,
        dropout_rate: 0.0,
    };
    let mut rng = Rng::new(cfg.seed);
    // Xavier init plus a uniform jitter on every scalar, biases included, so
    // no gate or head path starts at exactly zero.
    let mut params = FusionModelParams::init(&model_cfg, &mut rng)?;
    for (_, arr) in params.arrays_mut() {
        arr.iter_mut().for_each(|v| *v += rng.uniform(-0.5, 0.5));
    }
    let frames: Vec<f64> = (0..cfg.seq_len * cfg.input_dim)
        .map(|_| rng.uniform(-1.0, 1.0))
        .collect();
    let seq = FeatureSequence::new(Matrix::from_vec(cfg.seq_len, cfg.input_dim, frames)?)?;
    let mut target = [0.0; NUM_EMOTIONS];
    target.iter_mut().for_each(|t| *t = rng.next_f64());

    let loss_of = |p: &FusionModelParams| -> Result<f64> {
        let (pred, _) = forward(&seq, cfg.seq_len, p, &model_cfg, Mode::Eval, &mut Rng::new(0))?;
        Ok(mse_loss(&pred, &target)?.0)
    };

    let (pred, cache) = forward(&seq, cfg.seq_len, &params, &model_cfg, Mode::Eval, &mut Rng::new(0))?;
    let (_, d_pred) = mse_loss(&pred, &target)?;
    let mut grads = backward(&cache, &d_pred, &params, &model_cfg)?;

    if let Some(name) = &cfg.corrupt_array {
        let found = grads
            .arrays_mut()
            .into_iter()
            .find(|(n, _)| n == name)
            .map(|(_, a)| {
                a[0] = a[0] * 1.5 + 1e-3;
            });
        if found.is_none() {
            return Err(Error::InvalidArgument(format!("unknown parameter array {name}")));
        }
    }

    let mut probe = params.clone();
    let mut out = Vec::new();
    for (idx, (name, analytic)) in grads.arrays().into_iter().enumerate() {
        let mut worst = ArrayCheck {
            use_global_vector,
            array: name,
            scalars: analytic.len(),
            worst_rel_err: 0.0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for j in 0..analytic.len() {
            let orig = probe.arrays_mut()[idx].1[j];
            probe.arrays_mut()[idx].1[j] = orig + cfg.step;
            let up = loss_of(&probe)?;
            probe.arrays_mut()[idx].1[j] = orig - cfg.step;
            let down = loss_of(&probe)?;
            probe.arrays_mut()[idx].1[j] = orig;
            let numeric = (up - down) / (2.0 * cfg.step);
            let err = relative_error(analytic[j], numeric);
            if err > worst.worst_rel_err || j == 0 {
                worst.worst_rel_err = err;
                worst.analytic = analytic[j];
                worst.numeric = numeric;
            }
        }
        out.push(worst);
    }
    Ok(out)
}
