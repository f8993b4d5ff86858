//! The fusion regressor: a two-layer LSTM over per-frame features whose
//! final hidden state is concatenated with the masked mean of the frames
//! (the global context vector) and fed to a two-layer ReLU MLP that emits
//! one intensity per emotion.
//!
//! Forward and backward passes are written out by hand; [`backward`]
//! returns exact gradients checked against finite differences in
//! [`crate::gradcheck`].

mod checkpoint;
mod lstm;

pub use checkpoint::{load_params, load_params_for, save_params, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use lstm::{lstm_cell_forward, CellCache, LayerTrace, LstmLayer};

use crate::error::{Error, Result};
use crate::linalg::{relu, relu_deriv, xavier_init, Matrix, Rng};

pub const NUM_EMOTIONS: usize = 6;
pub const NUM_LSTM_LAYERS: usize = 2;
pub const ACOUSTIC_DIM: usize = 1024;
pub const VAD_DIM: usize = 3;
/// Per-frame width: acoustic embedding followed by valence, arousal, dominance.
pub const FEATURE_DIM: usize = ACOUSTIC_DIM + VAD_DIM;

/// Display names in the fixed output order.
pub const EMOTIONS: [&str; NUM_EMOTIONS] = [
    "Admiration",
    "Amusement",
    "Determination",
    "Empathic Pain",
    "Excitement",
    "Joy",
];

/// Column keys used in every CSV file, same order as [`EMOTIONS`].
pub const EMOTION_KEYS: [&str; NUM_EMOTIONS] = [
    "admiration",
    "amusement",
    "determination",
    "empathic_pain",
    "excitement",
    "joy",
];

/// A `T × width` frame matrix with `T ≥ 1` and finite entries.
///
/// Production inputs are [`FEATURE_DIM`] wide; smaller widths are allowed so
/// tiny models can be exercised. Width is checked against the model config
/// at forward time.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    frames: Matrix,
}

impl FeatureSequence {
    pub fn new(frames: Matrix) -> Result<Self> {
        if frames.rows() == 0 {
            return Err(Error::EmptySequence);
        }
        if frames.cols() == 0 {
            return Err(Error::InvalidArgument("feature width must be at least 1".into()));
        }
        if !frames.is_finite() {
            return Err(Error::NonFinite {
                context: "feature sequence".into(),
            });
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &Matrix {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn width(&self) -> usize {
        self.frames.cols()
    }

    pub fn into_matrix(self) -> Matrix {
        self.frames
    }
}

/// Six intensities in `[0, 1]`, ordered as [`EMOTIONS`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmotionTargets([f64; NUM_EMOTIONS]);

impl EmotionTargets {
    pub fn new(values: [f64; NUM_EMOTIONS]) -> Result<Self> {
        for (k, v) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(v) {
                return Err(Error::InvalidArgument(format!(
                    "target {} = {v} outside [0, 1]",
                    EMOTION_KEYS[k]
                )));
            }
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64; NUM_EMOTIONS] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionModelConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub mlp_hidden_dim: usize,
    pub use_global_vector: bool,
    pub dropout_rate: f64,
}

impl Default for FusionModelConfig {
    fn default() -> Self {
        Self {
            input_dim: FEATURE_DIM,
            hidden_dim: FEATURE_DIM,
            mlp_hidden_dim: 256,
            use_global_vector: true,
            dropout_rate: 0.1,
        }
    }
}

impl FusionModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.mlp_hidden_dim == 0 {
            return Err(Error::Config(format!(
                "dimensions must be positive (input {}, hidden {}, mlp_hidden {})",
                self.input_dim, self.hidden_dim, self.mlp_hidden_dim
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    /// Width of the vector entering the MLP head.
    pub fn fused_dim(&self) -> usize {
        if self.use_global_vector {
            self.hidden_dim + self.input_dim
        } else {
            self.hidden_dim
        }
    }

    /// True when two configs produce identically shaped parameters.
    pub fn same_shapes(&self, other: &FusionModelConfig) -> bool {
        self.input_dim == other.input_dim
            && self.hidden_dim == other.hidden_dim
            && self.mlp_hidden_dim == other.mlp_hidden_dim
            && self.use_global_vector == other.use_global_vector
    }
}

/// Number of scalars in a parameter set for `config`.
pub fn param_count(config: &FusionModelConfig) -> usize {
    let h = config.hidden_dim;
    let d = config.input_dim;
    let m = config.mlp_hidden_dim;
    let layer1 = 4 * h * (d + h + 1);
    let layer2 = 4 * h * (h + h + 1);
    layer1 + layer2 + m * (config.fused_dim() + 1) + NUM_EMOTIONS * (m + 1)
}

/// Every learned array of the model. Also used for gradients and optimizer
/// moments, which share its shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionModelParams {
    pub lstm: [LstmLayer; NUM_LSTM_LAYERS],
    /// `mlp_hidden × F`
    pub mlp_w1: Matrix,
    pub mlp_b1: Vec<f64>,
    /// `6 × mlp_hidden`
    pub mlp_w2: Matrix,
    pub mlp_b2: Vec<f64>,
}

/// Gradients of a scalar loss, shape-congruent with [`FusionModelParams`].
pub type GradientSet = FusionModelParams;

/// Names of the parameter arrays in serialization order.
pub const PARAM_ARRAY_NAMES: [&str; 10] = [
    "lstm1.w", "lstm1.u", "lstm1.b", "lstm2.w", "lstm2.u", "lstm2.b", "mlp.w1", "mlp.b1",
    "mlp.w2", "mlp.b2",
];

impl FusionModelParams {
    pub fn init(config: &FusionModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let h = config.hidden_dim;
        let l1 = LstmLayer::init(rng, config.input_dim, h);
        let l2 = LstmLayer::init(rng, h, h);
        let mlp_w1 = xavier_init(rng, config.fused_dim(), config.mlp_hidden_dim);
        let mlp_w2 = xavier_init(rng, config.mlp_hidden_dim, NUM_EMOTIONS);
        Ok(Self {
            lstm: [l1, l2],
            mlp_w1,
            mlp_b1: vec![0.0; config.mlp_hidden_dim],
            mlp_w2,
            mlp_b2: vec![0.0; NUM_EMOTIONS],
        })
    }

    pub fn zeros(config: &FusionModelConfig) -> Self {
        let h = config.hidden_dim;
        Self {
            lstm: [LstmLayer::zeros(config.input_dim, h), LstmLayer::zeros(h, h)],
            mlp_w1: Matrix::zeros(config.mlp_hidden_dim, config.fused_dim()),
            mlp_b1: vec![0.0; config.mlp_hidden_dim],
            mlp_w2: Matrix::zeros(NUM_EMOTIONS, config.mlp_hidden_dim),
            mlp_b2: vec![0.0; NUM_EMOTIONS],
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.arrays_mut().into_iter().for_each(|(_, a)| a.fill(0.0));
        z
    }

    /// `(name, values)` for every array in serialization order.
    pub fn arrays(&self) -> [(&'static str, &[f64]); 10] {
        let [l1, l2] = &self.lstm;
        [
            (PARAM_ARRAY_NAMES[0], l1.w.data()),
            (PARAM_ARRAY_NAMES[1], l1.u.data()),
            (PARAM_ARRAY_NAMES[2], &l1.b),
            (PARAM_ARRAY_NAMES[3], l2.w.data()),
            (PARAM_ARRAY_NAMES[4], l2.u.data()),
            (PARAM_ARRAY_NAMES[5], &l2.b),
            (PARAM_ARRAY_NAMES[6], self.mlp_w1.data()),
            (PARAM_ARRAY_NAMES[7], &self.mlp_b1),
            (PARAM_ARRAY_NAMES[8], self.mlp_w2.data()),
            (PARAM_ARRAY_NAMES[9], &self.mlp_b2),
        ]
    }

    pub fn arrays_mut(&mut self) -> [(&'static str, &mut [f64]); 10] {
        let [l1, l2] = &mut self.lstm;
        [
            (PARAM_ARRAY_NAMES[0], l1.w.data_mut()),
            (PARAM_ARRAY_NAMES[1], l1.u.data_mut()),
            (PARAM_ARRAY_NAMES[2], &mut l1.b),
            (PARAM_ARRAY_NAMES[3], l2.w.data_mut()),
            (PARAM_ARRAY_NAMES[4], l2.u.data_mut()),
            (PARAM_ARRAY_NAMES[5], &mut l2.b),
            (PARAM_ARRAY_NAMES[6], self.mlp_w1.data_mut()),
            (PARAM_ARRAY_NAMES[7], &mut self.mlp_b1),
            (PARAM_ARRAY_NAMES[8], self.mlp_w2.data_mut()),
            (PARAM_ARRAY_NAMES[9], &mut self.mlp_b2),
        ]
    }

    pub fn scalar_count(&self) -> usize {
        self.arrays().iter().map(|(_, a)| a.len()).sum()
    }

    /// Checks every array against the shapes implied by `config`.
    pub fn check_shapes(&self, config: &FusionModelConfig) -> Result<()> {
        let h = config.hidden_dim;
        let m = config.mlp_hidden_dim;
        let expected: [(usize, usize); 10] = [
            (4 * h, config.input_dim),
            (4 * h, h),
            (4 * h, 1),
            (4 * h, h),
            (4 * h, h),
            (4 * h, 1),
            (m, config.fused_dim()),
            (m, 1),
            (NUM_EMOTIONS, m),
            (NUM_EMOTIONS, 1),
        ];
        let [l1, l2] = &self.lstm;
        let actual: [(usize, usize); 10] = [
            l1.w.shape(),
            l1.u.shape(),
            (l1.b.len(), 1),
            l2.w.shape(),
            l2.u.shape(),
            (l2.b.len(), 1),
            self.mlp_w1.shape(),
            (self.mlp_b1.len(), 1),
            self.mlp_w2.shape(),
            (self.mlp_b2.len(), 1),
        ];
        for ((name, got), want) in PARAM_ARRAY_NAMES.iter().zip(actual).zip(expected) {
            if got != want {
                return Err(Error::shape(
                    "parameter shapes",
                    format!("{name} {}x{}", got.0, got.1),
                    format!("{}x{}", want.0, want.1),
                ));
            }
        }
        Ok(())
    }

    /// `self += other`, array by array.
    pub fn add_assign(&mut self, other: &FusionModelParams) {
        for ((_, a), (_, b)) in self.arrays_mut().into_iter().zip(other.arrays()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for (_, a) in self.arrays_mut() {
            a.iter_mut().for_each(|v| *v *= s);
        }
    }

    /// Bitwise equality of every scalar, treating `-0.0 != 0.0`.
    pub fn bit_eq(&self, other: &FusionModelParams) -> bool {
        self.arrays().iter().zip(other.arrays().iter()).all(|((_, a), (_, b))| {
            a.len() == b.len() && a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits())
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Mean of the first `valid_len` frames; padding rows are ignored.
pub fn global_pool(seq: &FeatureSequence, valid_len: usize) -> Result<Vec<f64>> {
    if valid_len == 0 {
        return Err(Error::EmptySequence);
    }
    if valid_len > seq.len() {
        return Err(Error::ValidLen {
            valid_len,
            len: seq.len(),
        });
    }
    Ok(mean_rows(seq.frames(), valid_len))
}

fn mean_rows(m: &Matrix, rows: usize) -> Vec<f64> {
    let mut acc = vec![0.0; m.cols()];
    for t in 0..rows {
        for (a, v) in acc.iter_mut().zip(m.row(t)) {
            *a += v;
        }
    }
    let inv = 1.0 / rows as f64;
    acc.iter_mut().for_each(|a| *a *= inv);
    acc
}

/// Inverted dropout. Returns the masked vector and the per-coordinate
/// multipliers (`0` or `1/(1-p)`).
pub fn dropout(z: &[f64], p: f64, rng: &mut Rng) -> (Vec<f64>, Vec<f64>) {
    let keep_scale = 1.0 / (1.0 - p);
    let mask: Vec<f64> = z
        .iter()
        .map(|_| if rng.next_f64() < p { 0.0 } else { keep_scale })
        .collect();
    let out = z.iter().zip(&mask).map(|(v, m)| v * m).collect();
    (out, mask)
}

/// Intermediates retained by [`forward`] for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    config: FusionModelConfig,
    /// The `valid_len` frames actually consumed.
    inputs: Matrix,
    traces: [LayerTrace; NUM_LSTM_LAYERS],
    /// Dropout multipliers on the fused vector; `None` when inactive.
    mask: Option<Vec<f64>>,
    /// Fused vector after dropout.
    fused: Vec<f64>,
    mlp_pre: Vec<f64>,
    mlp_hidden: Vec<f64>,
}

impl ForwardCache {
    pub fn valid_len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn fused(&self) -> &[f64] {
        &self.fused
    }

    pub fn dropout_mask(&self) -> Option<&[f64]> {
        self.mask.as_deref()
    }

    pub fn trace(&self, layer: usize) -> &LayerTrace {
        &self.traces[layer]
    }
}

/// Runs one sequence through the model.
///
/// Only frames `0..valid_len` are read. `rng` is consumed only in train mode
/// with a nonzero dropout rate.
pub fn forward(
    seq: &FeatureSequence,
    valid_len: usize,
    params: &FusionModelParams,
    config: &FusionModelConfig,
    mode: Mode,
    rng: &mut Rng,
) -> Result<([f64; NUM_EMOTIONS], ForwardCache)> {
    if seq.width() != config.input_dim {
        return Err(Error::shape("forward input width", seq.width(), config.input_dim));
    }
    if valid_len == 0 {
        return Err(Error::EmptySequence);
    }
    if valid_len > seq.len() {
        return Err(Error::ValidLen {
            valid_len,
            len: seq.len(),
        });
    }
    params.check_shapes(config)?;

    let inputs = Matrix::from_vec(
        valid_len,
        config.input_dim,
        seq.frames().data()[..valid_len * config.input_dim].to_vec(),
    )?;
    let t1 = lstm::layer_forward(&params.lstm[0], &inputs, valid_len);
    let layer2_in = t1.outputs();
    let t2 = lstm::layer_forward(&params.lstm[1], &layer2_in, valid_len);

    let mut fused = t2.final_hidden().to_vec();
    if config.use_global_vector {
        fused.extend(mean_rows(&inputs, valid_len));
    }

    let mask = if mode == Mode::Train && config.dropout_rate > 0.0 {
        let (dropped, mask) = dropout(&fused, config.dropout_rate, rng);
        fused = dropped;
        Some(mask)
    } else {
        None
    };

    let mut mlp_pre = params.mlp_b1.clone();
    params.mlp_w1.matvec_add_into(&fused, &mut mlp_pre);
    let mlp_hidden: Vec<f64> = mlp_pre.iter().map(|&v| relu(v)).collect();
    let mut pred = [0.0; NUM_EMOTIONS];
    pred.copy_from_slice(&params.mlp_b2);
    params.mlp_w2.matvec_add_into(&mlp_hidden, &mut pred);

    Ok((
        pred,
        ForwardCache {
            config: *config,
            inputs,
            traces: [t1, t2],
            mask,
            fused,
            mlp_pre,
            mlp_hidden,
        },
    ))
}

/// Eval-mode prediction without keeping the cache around.
pub fn predict(
    seq: &FeatureSequence,
    valid_len: usize,
    params: &FusionModelParams,
    config: &FusionModelConfig,
) -> Result<[f64; NUM_EMOTIONS]> {
    // Eval mode never draws from the generator.
    let mut unused = Rng::new(0);
    forward(seq, valid_len, params, config, Mode::Eval, &mut unused).map(|(p, _)| p)
}

/// Gradients of a loss whose derivative w.r.t. the prediction is `d_pred`.
pub fn backward(
    cache: &ForwardCache,
    d_pred: &[f64; NUM_EMOTIONS],
    params: &FusionModelParams,
    config: &FusionModelConfig,
) -> Result<GradientSet> {
    let mut grads = FusionModelParams::zeros(config);
    backward_accumulate(cache, d_pred, params, config, &mut grads)?;
    Ok(grads)
}

/// Like [`backward`] but adds into an existing gradient set.
pub fn backward_accumulate(
    cache: &ForwardCache,
    d_pred: &[f64; NUM_EMOTIONS],
    params: &FusionModelParams,
    config: &FusionModelConfig,
    grads: &mut GradientSet,
) -> Result<()> {
    if cache.config != *config {
        return Err(Error::shape("backward", "cache config", "model config"));
    }
    params.check_shapes(config)?;
    grads.check_shapes(config)?;

    let h = config.hidden_dim;

    // Head.
    grads.mlp_w2.add_outer(d_pred, &cache.mlp_hidden);
    for (g, d) in grads.mlp_b2.iter_mut().zip(d_pred) {
        *g += d;
    }
    let mut d_hidden = vec![0.0; config.mlp_hidden_dim];
    params.mlp_w2.matvec_t_add_into(d_pred, &mut d_hidden);
    for (d, &pre) in d_hidden.iter_mut().zip(&cache.mlp_pre) {
        *d *= relu_deriv(pre);
    }
    grads.mlp_w1.add_outer(&d_hidden, &cache.fused);
    for (g, d) in grads.mlp_b1.iter_mut().zip(&d_hidden) {
        *g += d;
    }

    // Only the hidden-state part of the fused vector leads back to
    // parameters; the pooled part is a function of the data alone.
    let mut d_fused = vec![0.0; config.fused_dim()];
    params.mlp_w1.matvec_t_add_into(&d_hidden, &mut d_fused);
    if let Some(mask) = &cache.mask {
        for (d, m) in d_fused.iter_mut().zip(mask) {
            *d *= m;
        }
    }
    let d_final = &d_fused[..h];

    let steps = cache.valid_len();
    let mut dh_top = Matrix::zeros(steps, h);
    dh_top.row_mut(steps - 1).copy_from_slice(d_final);

    let layer2_in = cache.traces[0].outputs();
    let [g1, g2] = &mut grads.lstm;
    let dh_mid = lstm::layer_backward(
        &params.lstm[1],
        &layer2_in,
        &cache.traces[1],
        &dh_top,
        g2,
        true,
    )
    .expect("dx requested");
    lstm::layer_backward(
        &params.lstm[0],
        &cache.inputs,
        &cache.traces[0],
        &dh_mid,
        g1,
        false,
    );
    Ok(())
}
