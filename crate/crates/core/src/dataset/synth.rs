//! Synthetic sequences with skewed targets and a planted, learnable signal.
//!
//! Targets: each of the six intensities is drawn independently from a
//! two-component Beta mixture. With probability `p_low` the draw comes from
//! a mass near zero (`Beta(0.4, 3.0)` by default), otherwise from a mode
//! near one (`Beta(4.0, 1.5)`). Roughly 6% of values exceed 0.8 and the
//! median sits near 0.08.
//!
//! Frames: i.i.d. `N(0, noise_std²)` on every dimension, plus the signal.
//! Emotion `k` owns two disjoint 6-dimensional subspaces:
//!
//! * global-mean dims `6k .. 6k+6`: every frame gets `gain · y_k` added on
//!   each dim, so the frame mean over these dims is `gain · y_k` plus noise;
//! * temporal dims `36 + 6k .. 36 + 6k+6`: frame `t` of `T` gets
//!   `ramp(t) · gain · y_k`, where `ramp(t) = max(0, 2t/(T−1) − 1)`
//!   (`1` when `T = 1`). Only the second half of the sequence carries it and
//!   the last frame carries it fully.
//!
//! Stored values are rounded to `f32`, matching the on-disk format, so an
//! in-memory dataset equals what [`synth_generate`] writes.

use std::fmt;
use std::fs;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use rand_distr::{Beta, Distribution, Normal};

use super::{write_features, write_manifest, Dataset, Manifest, ManifestRecord, Sample, Split};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Rng};
use crate::model::{EmotionTargets, FeatureSequence, FEATURE_DIM, NUM_EMOTIONS};

pub const SUBSPACE_DIM: usize = 6;
pub const GLOBAL_SIGNAL_OFFSET: usize = 0;
pub const TEMPORAL_SIGNAL_OFFSET: usize = NUM_EMOTIONS * SUBSPACE_DIM;
/// Smallest feature width that holds both signal blocks.
pub const MIN_SYNTH_DIM: usize = TEMPORAL_SIGNAL_OFFSET + NUM_EMOTIONS * SUBSPACE_DIM;

pub fn global_signal_dims(emotion: usize) -> Range<usize> {
    let s = GLOBAL_SIGNAL_OFFSET + emotion * SUBSPACE_DIM;
    s..s + SUBSPACE_DIM
}

pub fn temporal_signal_dims(emotion: usize) -> Range<usize> {
    let s = TEMPORAL_SIGNAL_OFFSET + emotion * SUBSPACE_DIM;
    s..s + SUBSPACE_DIM
}

pub fn temporal_ramp(t: usize, len: usize) -> f64 {
    if len <= 1 {
        return 1.0;
    }
    (2.0 * t as f64 / (len - 1) as f64 - 1.0).max(0.0)
}

/// Inverts the global-mean encoding: averages each emotion's subspace of a
/// pooled vector and divides by the gain.
pub fn decode_global_signal(pooled: &[f64], gain: f64) -> [f64; NUM_EMOTIONS] {
    let mut out = [0.0; NUM_EMOTIONS];
    for (k, o) in out.iter_mut().enumerate() {
        let dims = global_signal_dims(k);
        *o = pooled[dims].iter().sum::<f64>() / SUBSPACE_DIM as f64 / gain;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalMode {
    GlobalMean,
    Temporal,
    Both,
}

impl SignalMode {
    fn global(self) -> bool {
        matches!(self, SignalMode::GlobalMean | SignalMode::Both)
    }

    fn temporal(self) -> bool {
        matches!(self, SignalMode::Temporal | SignalMode::Both)
    }
}

impl fmt::Display for SignalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SignalMode::GlobalMean => "global-mean",
            SignalMode::Temporal => "temporal",
            SignalMode::Both => "both",
        })
    }
}

impl FromStr for SignalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global-mean" => Ok(SignalMode::GlobalMean),
            "temporal" => Ok(SignalMode::Temporal),
            "both" => Ok(SignalMode::Both),
            other => Err(Error::InvalidArgument(format!(
                "unknown signal mode {other:?} (expected global-mean, temporal or both)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkewModel {
    pub p_low: f64,
    pub low: (f64, f64),
    pub high: (f64, f64),
}

impl Default for SkewModel {
    fn default() -> Self {
        Self {
            p_low: 0.85,
            low: (0.4, 3.0),
            high: (4.0, 1.5),
        }
    }
}

impl SkewModel {
    fn distributions(&self) -> Result<(Beta<f64>, Beta<f64>)> {
        if !(0.0..=1.0).contains(&self.p_low) {
            return Err(Error::Config(format!("p_low {} outside [0, 1]", self.p_low)));
        }
        let mk = |(a, b): (f64, f64)| {
            Beta::new(a, b).map_err(|e| Error::Config(format!("Beta({a}, {b}): {e}")))
        };
        Ok((mk(self.low)?, mk(self.high)?))
    }

    /// Six independent draws from the mixture.
    pub fn draw(&self, rng: &mut Rng) -> Result<[f64; NUM_EMOTIONS]> {
        let (low, high) = self.distributions()?;
        Ok(draw_with(self.p_low, &low, &high, rng))
    }
}

fn draw_with(p_low: f64, low: &Beta<f64>, high: &Beta<f64>, rng: &mut Rng) -> [f64; NUM_EMOTIONS] {
    let mut y = [0.0; NUM_EMOTIONS];
    for v in y.iter_mut() {
        let d = if rng.next_f64() < p_low { low } else { high };
        *v = d.sample(rng).clamp(0.0, 1.0);
    }
    y
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_samples: usize,
    pub seq_len_min: usize,
    pub seq_len_max: usize,
    pub feature_dim: usize,
    pub skew: SkewModel,
    pub signal_mode: SignalMode,
    /// Amplitude of the planted signal per unit target.
    pub signal_gain: f64,
    pub noise_std: f64,
    /// Leading fraction of samples assigned to `train`; the rest are `val`.
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_samples: 500,
            seq_len_min: 6,
            seq_len_max: 20,
            feature_dim: FEATURE_DIM,
            skew: SkewModel::default(),
            signal_mode: SignalMode::Both,
            signal_gain: 1.0,
            noise_std: 0.1,
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::Config("n_samples must be at least 1".into()));
        }
        if self.seq_len_min < 1 || self.seq_len_min > self.seq_len_max {
            return Err(Error::Config(format!(
                "seq_len range ({}, {}) must satisfy 1 <= min <= max",
                self.seq_len_min, self.seq_len_max
            )));
        }
        if self.feature_dim < MIN_SYNTH_DIM {
            return Err(Error::Config(format!(
                "feature_dim {} is below the {MIN_SYNTH_DIM} dims the planted signal needs",
                self.feature_dim
            )));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config(format!("noise_std {} must be >= 0", self.noise_std)));
        }
        if !self.signal_gain.is_finite() {
            return Err(Error::Config("signal_gain must be finite".into()));
        }
        if !(0.0..=1.0).contains(&self.train_fraction) {
            return Err(Error::Config(format!(
                "train_fraction {} outside [0, 1]",
                self.train_fraction
            )));
        }
        self.skew.distributions().map(|_| ())
    }

    pub fn n_train(&self) -> usize {
        (self.n_samples as f64 * self.train_fraction).round() as usize
    }
}

/// Generates every sample in memory with its split assignment.
pub fn synth_samples(cfg: &SynthConfig) -> Result<Vec<(Sample, Split)>> {
    cfg.validate()?;
    let (low, high) = cfg.skew.distributions()?;
    let noise = Normal::new(0.0, cfg.noise_std)
        .map_err(|e| Error::Config(format!("noise distribution: {e}")))?;
    let n_train = cfg.n_train();
    let mut master = Rng::new(cfg.seed);
    let mut out = Vec::with_capacity(cfg.n_samples);
    for i in 0..cfg.n_samples {
        let mut rng = master.fork();
        let y = draw_with(cfg.skew.p_low, &low, &high, &mut rng);
        let len = rng.range_inclusive(cfg.seq_len_min, cfg.seq_len_max);
        let mut frames = Matrix::zeros(len, cfg.feature_dim);
        if cfg.noise_std > 0.0 {
            for v in frames.data_mut() {
                *v = noise.sample(&mut rng);
            }
        }
        for t in 0..len {
            let row = frames.row_mut(t);
            for (k, &yk) in y.iter().enumerate() {
                if cfg.signal_mode.global() {
                    for d in global_signal_dims(k) {
                        row[d] += cfg.signal_gain * yk;
                    }
                }
                if cfg.signal_mode.temporal() {
                    let w = temporal_ramp(t, len);
                    for d in temporal_signal_dims(k) {
                        row[d] += w * cfg.signal_gain * yk;
                    }
                }
            }
        }
        for v in frames.data_mut() {
            *v = *v as f32 as f64;
        }
        let split = if i < n_train { Split::Train } else { Split::Val };
        out.push((
            Sample {
                id: format!("synth_{i:05}"),
                features: FeatureSequence::new(frames)?,
                targets: Some(EmotionTargets::new(y)?),
            },
            split,
        ));
    }
    Ok(out)
}

/// In-memory `(train, val)` datasets.
pub fn synth_split(cfg: &SynthConfig) -> Result<(Dataset, Dataset)> {
    let mut train = Dataset::default();
    let mut val = Dataset::default();
    for (s, split) in synth_samples(cfg)? {
        match split {
            Split::Train => train.samples.push(s),
            _ => val.samples.push(s),
        }
    }
    Ok((train, val))
}

/// Writes `features/<id>.emif` files and `manifest.csv` under `out_dir`.
pub fn synth_generate(cfg: &SynthConfig, out_dir: &Path) -> Result<Manifest> {
    let samples = synth_samples(cfg)?;
    let feat_dir = out_dir.join("features");
    fs::create_dir_all(&feat_dir).map_err(|e| Error::io(&feat_dir, e))?;
    let mut records = Vec::with_capacity(samples.len());
    for (s, split) in samples {
        let rel = Path::new("features").join(format!("{}.emif", s.id));
        write_features(&out_dir.join(&rel), s.features.frames())?;
        records.push(ManifestRecord {
            sample_id: s.id,
            feature_path: rel,
            targets: s.targets,
            split,
        });
    }
    write_manifest(&out_dir.join("manifest.csv"), &records)?;
    Ok(Manifest {
        root: out_dir.to_path_buf(),
        records,
    })
}

/// Empirical quantile (nearest-rank on a sorted copy).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let idx = ((v.len() - 1) as f64 * q).round() as usize;
    v[idx]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::global_pool;

    fn small(mode: SignalMode, noise: f64) -> SynthConfig {
        SynthConfig {
            n_samples: 20,
            seq_len_min: 1,
            seq_len_max: 7,
            feature_dim: 80,
            signal_mode: mode,
            noise_std: noise,
            seed: 3,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn noiseless_global_signal_decodes_to_targets() {
        for s in synth_samples(&small(SignalMode::GlobalMean, 0.0)).unwrap() {
            let (sample, _) = s;
            let pooled = global_pool(&sample.features, sample.features.len()).unwrap();
            let got = decode_global_signal(&pooled, 1.0);
            let want = sample.targets.unwrap();
            for k in 0..6 {
                // f32 storage rounding only.
                assert!((got[k] - want.values()[k]).abs() < 1e-7, "{got:?} vs {want:?}");
            }
            // Nothing outside the global block in this mode.
            assert!(pooled[MIN_SYNTH_DIM / 2..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn temporal_signal_lives_in_late_frames() {
        for (sample, _) in synth_samples(&small(SignalMode::Temporal, 0.0)).unwrap() {
            let f = sample.features.frames();
            let len = f.rows();
            let y = sample.targets.unwrap();
            for t in 0..len {
                let w = temporal_ramp(t, len);
                for k in 0..6 {
                    for d in temporal_signal_dims(k) {
                        assert!((f.get(t, d) - w * y.values()[k]).abs() < 1e-7);
                    }
                    for d in global_signal_dims(k) {
                        assert_eq!(f.get(t, d), 0.0);
                    }
                }
            }
            for k in 0..6 {
                let d = temporal_signal_dims(k).start;
                assert!((f.get(len - 1, d) - y.values()[k]).abs() < 1e-7);
                if len > 2 {
                    assert_eq!(f.get(0, d), 0.0);
                }
            }
        }
    }

    #[test]
    fn ramp_shape() {
        assert_eq!(temporal_ramp(0, 1), 1.0);
        assert_eq!(temporal_ramp(0, 5), 0.0);
        assert_eq!(temporal_ramp(2, 5), 0.0);
        assert_eq!(temporal_ramp(3, 5), 0.5);
        assert_eq!(temporal_ramp(4, 5), 1.0);
    }

    #[test]
    fn split_is_eighty_twenty_and_deterministic() {
        let cfg = SynthConfig {
            n_samples: 25,
            ..small(SignalMode::Both, 0.1)
        };
        let a = synth_samples(&cfg).unwrap();
        assert_eq!(a.iter().filter(|(_, s)| *s == Split::Train).count(), 20);
        assert_eq!(a, synth_samples(&cfg).unwrap());
        let other = SynthConfig { seed: 4, ..cfg };
        assert_ne!(a, synth_samples(&other).unwrap());
    }

    #[test]
    fn lengths_within_range() {
        let cfg = SynthConfig {
            n_samples: 200,
            seq_len_min: 3,
            seq_len_max: 5,
            ..small(SignalMode::Both, 0.1)
        };
        let lens: Vec<usize> = synth_samples(&cfg).unwrap().iter().map(|(s, _)| s.features.len()).collect();
        assert!(lens.iter().all(|l| (3..=5).contains(l)));
        for l in 3..=5 {
            assert!(lens.contains(&l));
        }
    }

    #[test]
    fn validation_errors() {
        let base = small(SignalMode::Both, 0.1);
        assert!(SynthConfig { seq_len_min: 0, ..base.clone() }.validate().is_err());
        assert!(SynthConfig { seq_len_min: 9, seq_len_max: 3, ..base.clone() }.validate().is_err());
        assert!(SynthConfig { noise_std: -1.0, ..base.clone() }.validate().is_err());
        assert!(SynthConfig { feature_dim: 50, ..base.clone() }.validate().is_err());
        assert!(SynthConfig { n_samples: 0, ..base }.validate().is_err());
        assert!("sideways".parse::<SignalMode>().is_err());
        assert_eq!("global-mean".parse::<SignalMode>().unwrap(), SignalMode::GlobalMean);
    }

    #[test]
    fn skew_monte_carlo() {
        // Mixture quantities from the Beta CDFs: P(y > 0.8) = 0.0623,
        // median = 0.0815.
        let skew = SkewModel::default();
        let mut rng = Rng::new(11);
        let mut all = Vec::new();
        for _ in 0..10_000 / 6 + 1 {
            all.extend(skew.draw(&mut rng).unwrap());
        }
        let frac = all.iter().filter(|&&v| v > 0.8).count() as f64 / all.len() as f64;
        assert!((frac - 0.0623).abs() < 0.012, "{frac}");
        let med = quantile(&all, 0.5);
        assert!((med - 0.0815).abs() < 0.01, "{med}");
        assert!(all.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
