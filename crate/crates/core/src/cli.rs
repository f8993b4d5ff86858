//! The `emi` command-line tool.
//!
//! Settings come from three layers, later ones winning: built-in defaults,
//! a `key = value` config file (`--config`), then command-line flags
//! (`--set key=value` and the dedicated flags such as `--seed`). Every key
//! is checked against [`CONFIG_KEYS`]; unknown keys are errors.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numeric
//! failure, 4 gradcheck failure.

use std::collections::{BTreeSet, HashMap};
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::dataset::synth::quantile;
use crate::dataset::{load_manifest, synth_generate, Dataset, Manifest, SignalMode, SynthConfig, Split};
use crate::error::{Error, Result};
use crate::gradcheck::{run_gradcheck, GradcheckConfig};
use crate::linalg::Matrix;
use crate::metrics::{rho_val, MetricsReport};
use crate::model::{load_params, param_count, save_params, FusionModelConfig, FusionModelParams, EMOTION_KEYS, NUM_EMOTIONS};
use crate::training::{predict_dataset, train_with_observer, EpochRecord, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_GRADCHECK: i32 = 4;

/// Every key accepted in config files and `--set`.
pub const CONFIG_KEYS: &[&str] = &[
    // model
    "input_dim",
    "hidden_dim",
    "mlp_hidden_dim",
    "use_global_vector",
    "dropout_rate",
    // training
    "base_lr",
    "epochs",
    "batch_size",
    "patience",
    "early_stopping",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "train_splits",
    // shared
    "seed",
    "out_dir",
    "manifest",
    "data_root",
    "checkpoint",
    "split",
    // synth
    "n_samples",
    "seq_len_min",
    "seq_len_max",
    "feature_dim",
    "signal_mode",
    "signal_gain",
    "noise_std",
    "train_fraction",
    "skew_p_low",
    "skew_low_alpha",
    "skew_low_beta",
    "skew_high_alpha",
    "skew_high_beta",
    // gradcheck
    "gradcheck_step",
    "gradcheck_tolerance",
];

/// Header shared by the training history and eval metrics files.
pub fn metrics_header() -> String {
    let mut cols = vec!["epoch", "lr", "train_mse", "val_rho"];
    cols.extend(EMOTION_KEYS);
    cols.join(",")
}

pub fn predictions_header() -> String {
    let mut cols = vec!["sample_id"];
    cols.extend(EMOTION_KEYS);
    cols.join(",")
}

/// Merged settings for every subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: FusionModelConfig,
    pub train: TrainConfig,
    pub synth: SynthConfig,
    pub gradcheck: GradcheckConfig,
    pub train_splits: Vec<Split>,
    pub out_dir: PathBuf,
    pub manifest: Option<PathBuf>,
    pub data_root: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub split: Option<Split>,
    explicit: BTreeSet<&'static str>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: FusionModelConfig::default(),
            train: TrainConfig::default(),
            synth: SynthConfig::default(),
            gradcheck: GradcheckConfig::default(),
            train_splits: vec![Split::Train],
            out_dir: PathBuf::from("out"),
            manifest: None,
            data_root: None,
            checkpoint: None,
            split: None,
            explicit: BTreeSet::new(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {value:?}"))),
    }
}

impl RunConfig {
    /// Defaults, then `file` (if any), then `overrides` in order.
    pub fn from_sources(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            for (line, key, value) in parse_config_text(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            {
                cfg.set(&key, &value)
                    .map_err(|e| Error::Config(format!("{}:{line}: {e}", path.display())))?;
            }
        }
        for (key, value) in overrides {
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    /// Keys set by a file or flag rather than left at their default.
    pub fn is_explicit(&self, key: &str) -> bool {
        self.explicit.contains(key)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let Some(&known) = CONFIG_KEYS.iter().find(|k| **k == key) else {
            return Err(Error::Config(format!("unknown config key {key:?}")));
        };
        let value = value.trim();
        match key {
            "input_dim" => self.model.input_dim = parse(key, value)?,
            "hidden_dim" => self.model.hidden_dim = parse(key, value)?,
            "mlp_hidden_dim" => self.model.mlp_hidden_dim = parse(key, value)?,
            "use_global_vector" => self.model.use_global_vector = parse_bool(key, value)?,
            "dropout_rate" => self.model.dropout_rate = parse(key, value)?,
            "base_lr" => self.train.base_lr = parse(key, value)?,
            "epochs" => self.train.epochs = parse(key, value)?,
            "batch_size" => self.train.batch_size = parse(key, value)?,
            "patience" => self.train.patience = parse(key, value)?,
            "early_stopping" => self.train.early_stopping = parse_bool(key, value)?,
            "adam_beta1" => self.train.adam.beta1 = parse(key, value)?,
            "adam_beta2" => self.train.adam.beta2 = parse(key, value)?,
            "adam_eps" => self.train.adam.eps = parse(key, value)?,
            "train_splits" => {
                let splits = value
                    .split(',')
                    .map(|s| s.trim().parse::<Split>())
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| Error::Config(format!("{key}: {e}")))?;
                if splits.is_empty() {
                    return Err(Error::Config(format!("{key}: empty split list")));
                }
                self.train_splits = splits;
            }
            "seed" => {
                let seed = parse(key, value)?;
                self.train.seed = seed;
                self.synth.seed = seed;
                self.gradcheck.seed = seed;
            }
            "out_dir" => self.out_dir = PathBuf::from(value),
            "manifest" => self.manifest = Some(PathBuf::from(value)),
            "data_root" => self.data_root = Some(PathBuf::from(value)),
            "checkpoint" => self.checkpoint = Some(PathBuf::from(value)),
            "split" => {
                self.split = Some(value.parse().map_err(|e| Error::Config(format!("{key}: {e}")))?)
            }
            "n_samples" => self.synth.n_samples = parse(key, value)?,
            "seq_len_min" => self.synth.seq_len_min = parse(key, value)?,
            "seq_len_max" => self.synth.seq_len_max = parse(key, value)?,
            "feature_dim" => self.synth.feature_dim = parse(key, value)?,
            "signal_mode" => {
                self.synth.signal_mode =
                    SignalMode::from_str(value).map_err(|e| Error::Config(format!("{key}: {e}")))?
            }
            "signal_gain" => self.synth.signal_gain = parse(key, value)?,
            "noise_std" => self.synth.noise_std = parse(key, value)?,
            "train_fraction" => self.synth.train_fraction = parse(key, value)?,
            "skew_p_low" => self.synth.skew.p_low = parse(key, value)?,
            "skew_low_alpha" => self.synth.skew.low.0 = parse(key, value)?,
            "skew_low_beta" => self.synth.skew.low.1 = parse(key, value)?,
            "skew_high_alpha" => self.synth.skew.high.0 = parse(key, value)?,
            "skew_high_beta" => self.synth.skew.high.1 = parse(key, value)?,
            "gradcheck_step" => self.gradcheck.step = parse(key, value)?,
            "gradcheck_tolerance" => self.gradcheck.tolerance = parse(key, value)?,
            _ => unreachable!("key listed in CONFIG_KEYS without a handler: {key}"),
        }
        self.explicit.insert(known);
        Ok(())
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.manifest
            .clone()
            .unwrap_or_else(|| self.out_dir.join("manifest.csv"))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| self.out_dir.join("model.seqf"))
    }

    fn load_manifest(&self) -> Result<Manifest> {
        let mut m = load_manifest(&self.manifest_path())?;
        if let Some(root) = &self.data_root {
            m.root = root.clone();
        }
        Ok(m)
    }

    /// Loads a checkpoint, refusing one whose shape disagrees with any
    /// explicitly configured model key.
    fn load_checkpoint(&self) -> Result<(FusionModelConfig, FusionModelParams)> {
        let path = self.checkpoint_path();
        let (stored, params) = load_params(&path)?;
        let mut want = stored;
        if self.is_explicit("input_dim") {
            want.input_dim = self.model.input_dim;
        }
        if self.is_explicit("hidden_dim") {
            want.hidden_dim = self.model.hidden_dim;
        }
        if self.is_explicit("mlp_hidden_dim") {
            want.mlp_hidden_dim = self.model.mlp_hidden_dim;
        }
        if self.is_explicit("use_global_vector") {
            want.use_global_vector = self.model.use_global_vector;
        }
        if !want.same_shapes(&stored) {
            return Err(Error::shape(
                "checkpoint vs config",
                format!("{} has {}", path.display(), describe_shape(&stored)),
                describe_shape(&want),
            ));
        }
        Ok((stored, params))
    }
}

fn describe_shape(c: &FusionModelConfig) -> String {
    format!(
        "input_dim={} hidden_dim={} mlp_hidden_dim={} use_global_vector={}",
        c.input_dim, c.hidden_dim, c.mlp_hidden_dim, c.use_global_vector
    )
}

/// Parses `key = value` lines. `#` starts a comment; blank lines are
/// skipped. Returns `(line_number, key, value)`; a key repeated within one
/// file is an error.
pub fn parse_config_text(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut seen = HashMap::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!("line {line_no}: expected key = value, got {line:?}")));
        };
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(Error::Config(format!("line {line_no}: empty key")));
        }
        if let Some(prev) = seen.insert(key.clone(), line_no) {
            return Err(Error::Config(format!(
                "line {line_no}: key {key:?} already set on line {prev}"
            )));
        }
        out.push((line_no, key, value.trim().to_string()));
    }
    Ok(out)
}

/// Maps an error to the process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidArgument(_) => EXIT_USAGE,
        Error::NonFinite { .. } | Error::DegenerateVariance => EXIT_NUMERIC,
        Error::Gradcheck { .. } => EXIT_GRADCHECK,
        Error::Sample { source, .. } => exit_code(source),
        Error::Shape { .. }
        | Error::EmptySequence
        | Error::ValidLen { .. }
        | Error::InsufficientData { .. }
        | Error::Io { .. }
        | Error::Parse { .. }
        | Error::Manifest(_) => EXIT_DATA,
    }
}

#[derive(Debug, Parser)]
#[command(name = "emi", version, about = "Emotional mimicry intensity regression")]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// key = value config file
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Override any config key; repeatable
    #[arg(long = "set", global = true, value_name = "KEY=VALUE", value_parser = parse_key_value)]
    set: Vec<(String, String)>,
}

#[derive(Debug, Args)]
struct DataArgs {
    #[arg(long, value_name = "PATH")]
    manifest: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset (feature files + manifest)
    Synth,
    /// Train and save the best checkpoint
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        no_global_vector: bool,
        #[arg(long)]
        no_dropout: bool,
        /// Run exactly N epochs without early stopping and keep the last one
        #[arg(long, value_name = "N")]
        fixed_epochs: Option<usize>,
    },
    /// Score a checkpoint (or a predictions file) on a labeled split
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        split: Option<String>,
        /// Score this predictions CSV instead of running the model
        #[arg(long, value_name = "PATH")]
        predictions: Option<PathBuf>,
    },
    /// Export clamped predictions as CSV
    Predict {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        split: Option<String>,
        #[arg(long, value_name = "PATH")]
        output: Option<PathBuf>,
    },
    /// Check the analytic gradients against finite differences
    Gradcheck {
        #[arg(long, hide = true, value_name = "ARRAY")]
        corrupt_gradient: Option<String>,
    },
}

fn parse_key_value(s: &str) -> std::result::Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected KEY=VALUE, got {s:?}"))
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let mut overrides = cli.common.set.clone();
    let mut flag = |k: &str, v: String| overrides.push((k.to_string(), v));
    if let Some(seed) = cli.common.seed {
        flag("seed", seed.to_string());
    }
    if let Some(out) = &cli.common.out {
        flag("out_dir", out.display().to_string());
    }
    let data = match &cli.command {
        Command::Train { data, .. } | Command::Eval { data, .. } | Command::Predict { data, .. } => Some(data),
        _ => None,
    };
    if let Some(data) = data {
        if let Some(m) = &data.manifest {
            flag("manifest", m.display().to_string());
        }
        if let Some(c) = &data.checkpoint {
            flag("checkpoint", c.display().to_string());
        }
    }
    match &cli.command {
        Command::Train {
            no_global_vector,
            no_dropout,
            fixed_epochs,
            ..
        } => {
            if *no_global_vector {
                flag("use_global_vector", "false".into());
            }
            if *no_dropout {
                flag("dropout_rate", "0".into());
            }
            if let Some(n) = fixed_epochs {
                flag("epochs", n.to_string());
                flag("early_stopping", "false".into());
            }
        }
        Command::Eval { split: Some(s), .. } | Command::Predict { split: Some(s), .. } => {
            flag("split", s.clone());
        }
        _ => {}
    }
    let cfg = RunConfig::from_sources(cli.common.config.as_deref(), &overrides)?;

    let stdout = &mut std::io::stdout().lock();
    match cli.command {
        Command::Synth => cmd_synth(&cfg, stdout),
        Command::Train { .. } => cmd_train(&cfg, stdout),
        Command::Eval { predictions, .. } => cmd_eval(&cfg, predictions.as_deref(), stdout),
        Command::Predict { output, .. } => cmd_predict(&cfg, output.as_deref(), stdout),
        Command::Gradcheck { corrupt_gradient } => {
            let mut gc = cfg.gradcheck.clone();
            gc.corrupt_array = corrupt_gradient;
            cmd_gradcheck(&gc, stdout)
        }
    }
}

fn out_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn cmd_synth(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let manifest = synth_generate(&cfg.synth, &cfg.out_dir)?;
    writeln!(
        out,
        "wrote {} samples to {} (train {}, val {})",
        manifest.records.len(),
        cfg.out_dir.display(),
        manifest.count(Split::Train),
        manifest.count(Split::Val)
    )
    .map_err(out_err)?;
    writeln!(out, "{:<14} {:>8} {:>8} {:>8} {:>8}", "target", "q10", "median", "q90", "P(>0.8)").map_err(out_err)?;
    let mut all = Vec::new();
    for (k, key) in EMOTION_KEYS.iter().enumerate() {
        let col: Vec<f64> = manifest
            .records
            .iter()
            .filter_map(|r| r.targets.map(|t| t.values()[k]))
            .collect();
        write_quantile_row(out, key, &col)?;
        all.extend(col);
    }
    write_quantile_row(out, "all", &all)
}

fn write_quantile_row(out: &mut dyn Write, name: &str, v: &[f64]) -> Result<()> {
    let high = v.iter().filter(|&&x| x > 0.8).count() as f64 / v.len() as f64;
    writeln!(
        out,
        "{name:<14} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
        quantile(v, 0.1),
        quantile(v, 0.5),
        quantile(v, 0.9),
        high
    )
    .map_err(out_err)
}

fn metrics_row(epoch: Option<&EpochRecord>, report: &MetricsReport) -> String {
    let mut cols: Vec<String> = match epoch {
        Some(r) => vec![r.epoch.to_string(), r.lr.to_string(), r.train_mse.to_string()],
        None => vec![String::new(); 3],
    };
    cols.push(report.rho_val.to_string());
    cols.extend(report.rho_per_emotion.iter().map(f64::to_string));
    cols.join(",")
}

fn append_line(file: &mut File, path: &Path, line: &str) -> Result<()> {
    file.write_all(format!("{line}\n").as_bytes())
        .and_then(|_| file.flush())
        .map_err(|e| Error::io(path, e))
}

fn load_split(manifest: &Manifest, split: Split, width: usize) -> Result<Dataset> {
    let ds = Dataset::load(manifest, split, width)?;
    if ds.is_empty() {
        return Err(Error::Manifest(format!("split {split} has no samples")));
    }
    Ok(ds)
}

pub fn cmd_train(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    cfg.model.validate()?;
    cfg.train.validate()?;
    let manifest = cfg.load_manifest()?;
    let mut train_set = Dataset::default();
    for &split in &cfg.train_splits {
        train_set
            .samples
            .extend(load_split(&manifest, split, cfg.model.input_dim)?.samples);
    }
    let val_set = load_split(&manifest, Split::Val, cfg.model.input_dim)?;

    ensure_dir(&cfg.out_dir)?;
    let metrics_path = cfg.out_dir.join("metrics.csv");
    let mut metrics = File::create(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
    append_line(&mut metrics, &metrics_path, &metrics_header())?;

    writeln!(
        out,
        "param_count {} (input_dim {}, hidden_dim {}, mlp_hidden_dim {}, global vector {})",
        param_count(&cfg.model),
        cfg.model.input_dim,
        cfg.model.hidden_dim,
        cfg.model.mlp_hidden_dim,
        if cfg.model.use_global_vector { "on" } else { "off" }
    )
    .map_err(out_err)?;
    writeln!(out, "train {} samples, val {} samples", train_set.len(), val_set.len()).map_err(out_err)?;

    let mut write_err = None;
    let outcome = train_with_observer(&train_set, &val_set, &cfg.model, &cfg.train, |rec| {
        if write_err.is_some() {
            return;
        }
        let res = append_line(&mut metrics, &metrics_path, &metrics_row(Some(rec), &rec.val)).and_then(|_| {
            writeln!(
                out,
                "epoch {:>3}  lr {:.3e}  train_mse {:.6}  val_rho {:.4}",
                rec.epoch, rec.lr, rec.train_mse, rec.val.rho_val
            )
            .map_err(out_err)
        });
        if let Err(e) = res {
            write_err = Some(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(e);
    }

    let ckpt = cfg.checkpoint_path();
    if let Some(parent) = ckpt.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    let h = &outcome.history;
    if cfg.train.early_stopping {
        save_params(&outcome.best_params, &cfg.model, &ckpt)?;
    } else {
        save_params(&outcome.final_params, &cfg.model, &ckpt)?;
        let last = h.epochs.last().expect("at least one epoch");
        writeln!(
            out,
            "fixed epochs: saved epoch {} (val_rho {:.4})",
            last.epoch, last.val.rho_val
        )
        .map_err(out_err)?;
    }
    if outcome.stopped_early {
        writeln!(out, "early stop after epoch {}", h.epochs.len() - 1).map_err(out_err)?;
    }
    writeln!(out, "checkpoint {}", ckpt.display()).map_err(out_err)?;
    writeln!(out, "best val_rho {} at epoch {}", h.best_metric, h.best_epoch).map_err(out_err)
}

/// Reads a predictions CSV into a map from sample id to row.
pub fn read_predictions(path: &Path) -> Result<HashMap<String, [f64; NUM_EMOTIONS]>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
    let header = rdr
        .headers()
        .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != predictions_header() {
        return Err(Error::Manifest(format!(
            "{}: header {header:?}, expected {:?}",
            path.display(),
            predictions_header()
        )));
    }
    let mut out = HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Manifest(format!("{} row {row}: {e}", path.display())))?;
        let mut vals = [0.0; NUM_EMOTIONS];
        for (k, v) in vals.iter_mut().enumerate() {
            *v = rec[k + 1].trim().parse().map_err(|_| {
                Error::Manifest(format!(
                    "{} row {row}: {} value {:?} is not a number",
                    path.display(),
                    EMOTION_KEYS[k],
                    &rec[k + 1]
                ))
            })?;
        }
        if out.insert(rec[0].to_string(), vals).is_some() {
            return Err(Error::Manifest(format!(
                "{} row {row}: duplicate sample_id {}",
                path.display(),
                &rec[0]
            )));
        }
    }
    Ok(out)
}

pub fn cmd_eval(cfg: &RunConfig, predictions: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let split = cfg.split.unwrap_or(Split::Val);
    let manifest = cfg.load_manifest()?;
    let records: Vec<_> = manifest.split(split).collect();
    if records.is_empty() {
        return Err(Error::Manifest(format!("split {split} has no samples")));
    }
    let mut labels = Matrix::zeros(records.len(), NUM_EMOTIONS);
    for (i, r) in records.iter().enumerate() {
        let t = r.targets.ok_or_else(|| {
            Error::Manifest(format!("sample {} in split {split} has no labels", r.sample_id))
        })?;
        labels.row_mut(i).copy_from_slice(t.values());
    }

    let (source, preds) = match predictions {
        Some(path) => {
            let mut by_id = read_predictions(path)?;
            let mut preds = Matrix::zeros(records.len(), NUM_EMOTIONS);
            for (i, r) in records.iter().enumerate() {
                let row = by_id.remove(&r.sample_id).ok_or_else(|| {
                    Error::Manifest(format!("{} has no row for {}", path.display(), r.sample_id))
                })?;
                for (o, v) in preds.row_mut(i).iter_mut().zip(row) {
                    *o = v.clamp(0.0, 1.0);
                }
            }
            if let Some(extra) = by_id.keys().min() {
                return Err(Error::Manifest(format!(
                    "{}: sample {extra} is not in split {split}",
                    path.display()
                )));
            }
            (format!("predictions {}", path.display()), preds)
        }
        None => {
            let (model_cfg, params) = cfg.load_checkpoint()?;
            let data = load_split(&manifest, split, model_cfg.input_dim)?;
            (
                format!("checkpoint {}", cfg.checkpoint_path().display()),
                predict_dataset(&params, &model_cfg, &data)?,
            )
        }
    };
    let report = rho_val(&preds, &labels)?;

    ensure_dir(&cfg.out_dir)?;
    let csv_path = cfg.out_dir.join("eval_metrics.csv");
    let mut f = File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    append_line(&mut f, &csv_path, &metrics_header())?;
    append_line(&mut f, &csv_path, &metrics_row(None, &report))?;

    let text = format!(
        "{source}\nsplit {split} ({} samples)\n{report}\n{}\n",
        records.len(),
        if report.any_degenerate() {
            "warning: degenerate columns scored 0.0"
        } else {
            "no degenerate columns"
        }
    );
    let report_path = cfg.out_dir.join("eval_report.txt");
    fs::write(&report_path, &text).map_err(|e| Error::io(&report_path, e))?;
    out.write_all(text.as_bytes()).map_err(out_err)
}

/// Writes `sample_id` plus six clamped prediction columns.
pub fn write_predictions(path: &Path, ids: &[String], preds: &Matrix) -> Result<()> {
    let mut text = predictions_header();
    text.push('\n');
    for (i, id) in ids.iter().enumerate() {
        text.push_str(id);
        for v in preds.row(i) {
            text.push(',');
            text.push_str(&v.clamp(0.0, 1.0).to_string());
        }
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn cmd_predict(cfg: &RunConfig, output: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let split = cfg.split.unwrap_or(Split::Test);
    let manifest = cfg.load_manifest()?;
    let (model_cfg, params) = cfg.load_checkpoint()?;
    let data = load_split(&manifest, split, model_cfg.input_dim)?;
    let preds = predict_dataset(&params, &model_cfg, &data)?;
    let path = match output {
        Some(p) => p.to_path_buf(),
        None => {
            ensure_dir(&cfg.out_dir)?;
            cfg.out_dir.join("predictions.csv")
        }
    };
    let ids: Vec<String> = data.samples.iter().map(|s| s.id.clone()).collect();
    write_predictions(&path, &ids, &preds)?;
    writeln!(out, "wrote {} predictions for split {split} to {}", ids.len(), path.display()).map_err(out_err)
}

pub fn cmd_gradcheck(cfg: &GradcheckConfig, out: &mut dyn Write) -> Result<()> {
    let report = run_gradcheck(cfg)?;
    writeln!(
        out,
        "gradcheck input_dim={} hidden_dim={} mlp_hidden_dim={} seq_len={} step={:e} tolerance={:e}",
        cfg.input_dim, cfg.hidden_dim, cfg.mlp_hidden_dim, cfg.seq_len, cfg.step, cfg.tolerance
    )
    .map_err(out_err)?;
    for c in &report.checks {
        writeln!(
            out,
            "global {:<3} {:<9} {:>6} scalars  worst rel err {:.3e}{}",
            if c.use_global_vector { "on" } else { "off" },
            c.array,
            c.scalars,
            c.worst_rel_err,
            if c.worst_rel_err < report.tolerance { "" } else { "  FAIL" }
        )
        .map_err(out_err)?;
    }
    if let Some(w) = report.worst() {
        writeln!(out, "worst {:.3e} ({})", w.worst_rel_err, w.array).map_err(out_err)?;
    }
    report.into_result().map(|_| ())
}
