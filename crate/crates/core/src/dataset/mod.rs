//! Feature/label storage, in-memory datasets and padded mini-batches.

mod features;
mod manifest;
pub mod synth;

pub use features::{read_features, read_features_with_width, write_features, FEATURE_MAGIC, FEATURE_VERSION};
pub use manifest::{load_manifest, write_manifest, Manifest, ManifestRecord, Split, MANIFEST_HEADER};
pub use synth::{synth_generate, synth_samples, SignalMode, SkewModel, SynthConfig};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Rng};
use crate::model::{EmotionTargets, FeatureSequence, NUM_EMOTIONS};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub features: FeatureSequence,
    pub targets: Option<EmotionTargets>,
}

/// One split held in memory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Self {
        Self { samples }
    }

    /// Reads every feature file of `split`, checking each is `width` wide.
    pub fn load(manifest: &Manifest, split: Split, width: usize) -> Result<Self> {
        let mut samples = Vec::new();
        for rec in manifest.split(split) {
            let with_id = |e: Error| Error::Sample {
                sample_id: rec.sample_id.clone(),
                source: Box::new(e),
            };
            let frames = read_features_with_width(&manifest.resolve(rec), width).map_err(with_id)?;
            samples.push(Sample {
                id: rec.sample_id.clone(),
                features: FeatureSequence::new(frames).map_err(with_id)?,
                targets: rec.targets,
            });
        }
        Ok(Self { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn width(&self) -> Option<usize> {
        self.samples.first().map(|s| s.features.width())
    }

    pub fn is_labeled(&self) -> bool {
        self.samples.iter().all(|s| s.targets.is_some())
    }

    /// `N × 6` label matrix; errors if any sample is unlabeled.
    pub fn label_matrix(&self) -> Result<Matrix> {
        let mut m = Matrix::zeros(self.len(), NUM_EMOTIONS);
        for (i, s) in self.samples.iter().enumerate() {
            let t = s.targets.ok_or_else(|| {
                Error::InvalidArgument(format!("sample {} has no labels", s.id))
            })?;
            m.row_mut(i).copy_from_slice(t.values());
        }
        Ok(m)
    }
}

/// A zero-padded group of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// One `T_max × width` matrix per member; rows past `valid_lens[i]` are 0.
    pub frames: Vec<FeatureSequence>,
    pub valid_lens: Vec<usize>,
    /// `B × 6`
    pub targets: Matrix,
    pub sample_ids: Vec<String>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.valid_lens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valid_lens.is_empty()
    }

    pub fn max_len(&self) -> usize {
        self.frames.first().map_or(0, FeatureSequence::len)
    }

    fn build(members: &[&Sample]) -> Batch {
        let t_max = members.iter().map(|s| s.features.len()).max().unwrap_or(0);
        let width = members[0].features.width();
        let mut frames = Vec::with_capacity(members.len());
        let mut valid_lens = Vec::with_capacity(members.len());
        let mut targets = Matrix::zeros(members.len(), NUM_EMOTIONS);
        let mut sample_ids = Vec::with_capacity(members.len());
        for (i, s) in members.iter().enumerate() {
            let src = s.features.frames();
            let mut padded = Matrix::zeros(t_max, width);
            padded.data_mut()[..src.len()].copy_from_slice(src.data());
            frames.push(FeatureSequence::new(padded).expect("t_max >= 1 and finite"));
            valid_lens.push(src.rows());
            targets
                .row_mut(i)
                .copy_from_slice(s.targets.expect("checked labeled").values());
            sample_ids.push(s.id.clone());
        }
        Batch {
            frames,
            valid_lens,
            targets,
            sample_ids,
        }
    }
}

/// Iterator over the padded batches of one epoch.
pub struct Batches<'a> {
    dataset: &'a Dataset,
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

impl Iterator for Batches<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let members: Vec<&Sample> = self.order[self.pos..end]
            .iter()
            .map(|&i| &self.dataset.samples[i])
            .collect();
        self.pos = end;
        Some(Batch::build(&members))
    }
}

impl Batches<'_> {
    /// Sample indices in the order this epoch visits them.
    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

/// Splits `dataset` into batches of `batch_size` (last one may be short).
/// With `shuffle` the visiting order is a Fisher-Yates permutation drawn
/// from `rng`; otherwise dataset order is kept and `rng` is untouched.
pub fn batches<'a>(
    dataset: &'a Dataset,
    batch_size: usize,
    rng: &mut Rng,
    shuffle: bool,
) -> Result<Batches<'a>> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("cannot batch an empty dataset".into()));
    }
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
    }
    if let Some(s) = dataset.samples.iter().find(|s| s.targets.is_none()) {
        return Err(Error::InvalidArgument(format!(
            "sample {} has no labels; batches need labeled data",
            s.id
        )));
    }
    let width = dataset.samples[0].features.width();
    if let Some(s) = dataset.samples.iter().find(|s| s.features.width() != width) {
        return Err(Error::shape("batches", format!("{} width {}", s.id, s.features.width()), width));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    if shuffle {
        rng.shuffle(&mut order);
    }
    Ok(Batches {
        dataset,
        order,
        batch_size,
        pos: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> Dataset {
        let mut rng = Rng::new(0);
        Dataset::new(
            (0..n)
                .map(|i| {
                    let t = 1 + i % 4;
                    let data = (0..t * 3).map(|_| rng.uniform(0.5, 1.0)).collect();
                    Sample {
                        id: format!("s{i}"),
                        features: FeatureSequence::new(Matrix::from_vec(t, 3, data).unwrap()).unwrap(),
                        targets: Some(EmotionTargets::new([i as f64 / n as f64; 6]).unwrap()),
                    }
                })
                .collect(),
        )
    }

    #[test]
    fn batch_sizes_and_order() {
        let ds = toy(10);
        let sizes: Vec<usize> = batches(&ds, 4, &mut Rng::new(0), false)
            .unwrap()
            .map(|b| b.len())
            .collect();
        assert_eq!(sizes, vec![4, 4, 2]);

        let ids: Vec<String> = batches(&ds, 4, &mut Rng::new(0), false)
            .unwrap()
            .flat_map(|b| b.sample_ids)
            .collect();
        let want: Vec<String> = (0..10).map(|i| format!("s{i}")).collect();
        assert_eq!(ids, want);
    }

    #[test]
    fn seeded_shuffle_is_reproducible_and_complete() {
        let ds = toy(23);
        let run = |seed| -> Vec<String> {
            batches(&ds, 5, &mut Rng::new(seed), true)
                .unwrap()
                .flat_map(|b| b.sample_ids)
                .collect()
        };
        let a = run(7);
        assert_eq!(a, run(7));
        assert_ne!(a, run(8));
        let mut sorted = a.clone();
        sorted.sort();
        let mut want: Vec<String> = (0..23).map(|i| format!("s{i}")).collect();
        want.sort();
        assert_eq!(sorted, want);
    }

    #[test]
    fn padding_is_zero_and_lengths_recorded() {
        let ds = toy(6);
        for b in batches(&ds, 3, &mut Rng::new(1), true).unwrap() {
            let t_max = b.max_len();
            for (seq, &len) in b.frames.iter().zip(&b.valid_lens) {
                assert!(len <= t_max && len >= 1);
                assert_eq!(seq.len(), t_max);
                for t in len..t_max {
                    assert!(seq.frames().row(t).iter().all(|&v| v == 0.0));
                }
                for t in 0..len {
                    assert!(seq.frames().row(t).iter().all(|&v| v >= 0.5));
                }
            }
        }
    }

    #[test]
    fn rejects_empty_unlabeled_and_zero_batch() {
        let empty = Dataset::default();
        assert!(batches(&empty, 4, &mut Rng::new(0), false).is_err());
        let mut ds = toy(3);
        assert!(batches(&ds, 0, &mut Rng::new(0), false).is_err());
        ds.samples[1].targets = None;
        assert!(batches(&ds, 2, &mut Rng::new(0), false).is_err());
    }
}
