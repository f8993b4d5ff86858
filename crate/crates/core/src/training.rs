//! Mini-batch training: MSE loss, Adam under a per-epoch cosine schedule,
//! validation ρ_VAL after every epoch, and early stopping that keeps the
//! best snapshot.
//!
//! Everything is single-threaded and driven by one seed, so a run is fully
//! reproducible: gradients within a batch are summed in batch order.

use std::f64::consts::PI;

use crate::dataset::{batches, Dataset};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Rng};
use crate::metrics::{rho_val, MetricsReport};
use crate::model::{
    backward_accumulate, forward, predict, FusionModelConfig, FusionModelParams, GradientSet,
    Mode, NUM_EMOTIONS,
};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    /// When false every epoch runs and the last epoch's metric does not
    /// trigger a stop (fixed-epoch protocol).
    pub early_stopping: bool,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            base_lr: 1e-4,
            epochs: 30,
            batch_size: 32,
            patience: 5,
            early_stopping: true,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::Config(format!("base_lr {} must be > 0", self.base_lr)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        self.adam.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config(format!(
                "adam betas ({}, {}) must lie in [0, 1)",
                self.beta1, self.beta2
            )));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("adam eps {} must be > 0", self.eps)));
        }
        Ok(())
    }
}

/// Mean squared error over the six outputs and its gradient.
pub fn mse_loss(pred: &[f64; NUM_EMOTIONS], target: &[f64; NUM_EMOTIONS]) -> Result<(f64, [f64; NUM_EMOTIONS])> {
    if pred.iter().chain(target).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "mse_loss input".into(),
        });
    }
    let n = NUM_EMOTIONS as f64;
    let mut loss = 0.0;
    let mut grad = [0.0; NUM_EMOTIONS];
    for k in 0..NUM_EMOTIONS {
        let d = pred[k] - target[k];
        loss += d * d;
        grad[k] = 2.0 * d / n;
    }
    Ok((loss / n, grad))
}

/// `0.5 · base · (1 + cos(π · epoch / (total − 1)))`, or `base` for a
/// single-epoch run.
pub fn cosine_lr(epoch: usize, total_epochs: usize, base_lr: f64) -> Result<f64> {
    if epoch >= total_epochs {
        return Err(Error::InvalidArgument(format!(
            "epoch {epoch} out of range for {total_epochs} epochs"
        )));
    }
    if total_epochs == 1 {
        return Ok(base_lr);
    }
    let progress = epoch as f64 / (total_epochs - 1) as f64;
    Ok((0.5 * base_lr * (1.0 + (PI * progress).cos())).max(0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: FusionModelParams,
    pub v: FusionModelParams,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &FusionModelParams) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update. Nothing is modified if any gradient is
/// non-finite.
pub fn adam_step(
    params: &mut FusionModelParams,
    grads: &GradientSet,
    state: &mut AdamState,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    for (name, g) in grads.arrays() {
        if let Some(pos) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("gradient array {name} at index {pos}"),
            });
        }
    }
    state.t += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.t as i32);
    let p_arrays = params.arrays_mut();
    let m_arrays = state.m.arrays_mut();
    let v_arrays = state.v.arrays_mut();
    for (((_, p), (_, m)), ((_, v), (_, g))) in p_arrays
        .into_iter()
        .zip(m_arrays)
        .zip(v_arrays.into_iter().zip(grads.arrays()))
    {
        for j in 0..p.len() {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

/// True when each of the last `patience` epochs failed to strictly beat the
/// best value seen before it.
pub fn early_stop_check(metrics: &[f64], patience: usize) -> bool {
    if patience == 0 || metrics.len() < patience {
        return false;
    }
    let mut best = f64::NEG_INFINITY;
    let mut improved = Vec::with_capacity(metrics.len());
    for &m in metrics {
        improved.push(m > best);
        if m > best {
            best = m;
        }
    }
    improved[metrics.len() - patience..].iter().all(|&i| !i)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_mse: f64,
    pub val: MetricsReport,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_metric: f64,
}

impl TrainHistory {
    pub fn val_metrics(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.val.rho_val).collect()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best_params: FusionModelParams,
    pub history: TrainHistory,
    /// Parameters after the last epoch that ran.
    pub final_params: FusionModelParams,
    /// True when early stopping ended the run before `epochs`.
    pub stopped_early: bool,
}

/// Eval-mode predictions for every sample, clamped to `[0, 1]` (`N × 6`).
pub fn predict_dataset(
    params: &FusionModelParams,
    config: &FusionModelConfig,
    data: &Dataset,
) -> Result<Matrix> {
    let mut out = Matrix::zeros(data.len(), NUM_EMOTIONS);
    for (i, s) in data.samples.iter().enumerate() {
        let p = predict(&s.features, s.features.len(), params, config).map_err(|e| Error::Sample {
            sample_id: s.id.clone(),
            source: Box::new(e),
        })?;
        for (o, v) in out.row_mut(i).iter_mut().zip(p) {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("prediction for {}", s.id),
                });
            }
            *o = v.clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

/// Clamped predictions scored with [`rho_val`].
pub fn evaluate(
    params: &FusionModelParams,
    config: &FusionModelConfig,
    data: &Dataset,
) -> Result<MetricsReport> {
    let preds = predict_dataset(params, config, data)?;
    rho_val(&preds, &data.label_matrix()?)
}

/// Runs one optimisation step on `batch`, returning the mean batch loss.
fn train_batch(
    batch: &crate::dataset::Batch,
    params: &mut FusionModelParams,
    grads: &mut GradientSet,
    adam: &mut AdamState,
    model_cfg: &FusionModelConfig,
    train_cfg: &TrainConfig,
    lr: f64,
    dropout_rng: &mut Rng,
) -> Result<f64> {
    for (_, g) in grads.arrays_mut() {
        g.fill(0.0);
    }
    let scale = 1.0 / batch.len() as f64;
    let mut loss_sum = 0.0;
    for (i, seq) in batch.frames.iter().enumerate() {
        let (pred, cache) = forward(seq, batch.valid_lens[i], params, model_cfg, Mode::Train, dropout_rng)?;
        let target: [f64; NUM_EMOTIONS] = batch.targets.row(i).try_into().unwrap();
        let (loss, mut d_pred) = mse_loss(&pred, &target).map_err(|_| Error::NonFinite {
            context: format!("prediction for sample {}", batch.sample_ids[i]),
        })?;
        loss_sum += loss;
        d_pred.iter_mut().for_each(|d| *d *= scale);
        backward_accumulate(&cache, &d_pred, params, model_cfg, grads)?;
    }
    adam_step(params, grads, adam, lr, &train_cfg.adam)?;
    Ok(loss_sum * scale)
}

pub fn train(
    train_set: &Dataset,
    val_set: &Dataset,
    model_cfg: &FusionModelConfig,
    train_cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with_observer(train_set, val_set, model_cfg, train_cfg, |_| {})
}

/// [`train`] with a callback invoked after each epoch's validation.
pub fn train_with_observer(
    train_set: &Dataset,
    val_set: &Dataset,
    model_cfg: &FusionModelConfig,
    train_cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    model_cfg.validate()?;
    train_cfg.validate()?;
    for (name, ds) in [("train", train_set), ("val", val_set)] {
        if ds.is_empty() {
            return Err(Error::InvalidArgument(format!("{name} set is empty")));
        }
        if let Some(s) = ds.samples.iter().find(|s| s.features.width() != model_cfg.input_dim) {
            return Err(Error::shape(
                "dataset width",
                format!("{name} sample {} width {}", s.id, s.features.width()),
                model_cfg.input_dim,
            ));
        }
        if !ds.is_labeled() {
            return Err(Error::InvalidArgument(format!("{name} set has unlabeled samples")));
        }
    }

    let mut root = Rng::new(train_cfg.seed);
    let mut init_rng = root.fork();
    let mut shuffle_rng = root.fork();
    let mut dropout_rng = root.fork();

    let mut params = FusionModelParams::init(model_cfg, &mut init_rng)?;
    let mut grads = params.zeros_like();
    let mut adam = AdamState::new(&params);

    let mut history = TrainHistory {
        best_metric: f64::NEG_INFINITY,
        ..TrainHistory::default()
    };
    let mut best_params = params.clone();
    let mut stopped_early = false;

    for epoch in 0..train_cfg.epochs {
        let lr = cosine_lr(epoch, train_cfg.epochs, train_cfg.base_lr)?;
        let mut loss_total = 0.0;
        for (b, batch) in batches(train_set, train_cfg.batch_size, &mut shuffle_rng, true)?.enumerate() {
            let loss = train_batch(
                &batch,
                &mut params,
                &mut grads,
                &mut adam,
                model_cfg,
                train_cfg,
                lr,
                &mut dropout_rng,
            )
            .map_err(|e| match e {
                Error::NonFinite { context } => Error::NonFinite {
                    context: format!("epoch {epoch}, batch {b}: {context}"),
                },
                other => other,
            })?;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("loss at epoch {epoch}, batch {b}"),
                });
            }
            loss_total += loss * batch.len() as f64;
        }

        let val = evaluate(&params, model_cfg, val_set).map_err(|e| match e {
            Error::NonFinite { context } => Error::NonFinite {
                context: format!("validation after epoch {epoch}: {context}"),
            },
            other => other,
        })?;
        let record = EpochRecord {
            epoch,
            lr,
            train_mse: loss_total / train_set.len() as f64,
            val,
        };
        if record.val.rho_val > history.best_metric {
            history.best_metric = record.val.rho_val;
            history.best_epoch = epoch;
            best_params = params.clone();
        }
        on_epoch(&record);
        history.epochs.push(record);

        if train_cfg.early_stopping
            && epoch + 1 < train_cfg.epochs
            && early_stop_check(&history.val_metrics(), train_cfg.patience)
        {
            stopped_early = true;
            break;
        }
    }

    Ok(TrainOutcome {
        best_params,
        history,
        final_params: params,
        stopped_early,
    })
}
