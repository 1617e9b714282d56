use ndarray::{Array1, Array3};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::RandomSource;
use crate::types::{FeatureSpec, Instance, ModalityKind, PerModality, PerTask, Split};

/// Stacked features and masked labels for a group of instances.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub ids: Vec<String>,
    /// `[batch x seq_len x feat_dim]` per modality.
    pub features: PerModality<Array3<f64>>,
    pub valid_lens: PerModality<Vec<usize>>,
    /// Labels per task; entries with mask 0 are placeholders.
    pub labels: PerTask<Array1<f64>>,
    /// 1.0 where the task label is present.
    pub masks: PerTask<Array1<f64>>,
}

impl Batch {
    pub fn from_instances(instances: &[&Instance], specs: &PerModality<FeatureSpec>) -> Result<Self> {
        let n = instances.len();
        let mut features = specs.map(|_, s| Array3::zeros((n, s.seq_len, s.feat_dim)));
        let mut valid_lens = specs.map(|_, _| Vec::with_capacity(n));
        let mut labels = PerTask::splat(Array1::zeros(n));
        let mut masks = PerTask::splat(Array1::zeros(n));
        for (i, inst) in instances.iter().enumerate() {
            for (kind, seq) in inst.features.iter() {
                if seq.spec() != specs.get(kind) {
                    return Err(Error::Shape(format!(
                        "instance `{}`: {kind} spec differs from the batch spec",
                        inst.id
                    )));
                }
                features
                    .get_mut(kind)
                    .index_axis_mut(ndarray::Axis(0), i)
                    .assign(&seq.values().mapv(f64::from));
                valid_lens.get_mut(kind).push(seq.valid_len());
            }
            if let Some(set) = &inst.labels {
                for task in ModalityKind::TASKS {
                    if let Some(y) = set.get(task) {
                        labels.get_mut(task)[i] = y;
                        masks.get_mut(task)[i] = 1.0;
                    }
                }
            }
        }
        Ok(Self {
            ids: instances.iter().map(|i| i.id.clone()).collect(),
            features,
            valid_lens,
            labels,
            masks,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Number of instances carrying the multimodal label.
    pub fn n_supervised(&self) -> usize {
        self.masks.m.iter().filter(|&&m| m > 0.0).count()
    }
}

/// Yields batches over the selected splits, each instance exactly once per pass.
pub struct BatchIter<'a> {
    instances: Vec<&'a Instance>,
    specs: &'a PerModality<FeatureSpec>,
    batch_size: usize,
    pos: usize,
}

impl<'a> BatchIter<'a> {
    pub fn num_batches(&self) -> usize {
        self.instances.len().div_ceil(self.batch_size)
    }

    /// Instance ids in iteration order.
    pub fn order(&self) -> Vec<&'a str> {
        self.instances.iter().map(|i| i.id.as_str()).collect()
    }
}

impl<'a> Iterator for BatchIter<'a> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.instances.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.instances.len());
        let chunk = &self.instances[self.pos..end];
        self.pos = end;
        Some(Batch::from_instances(chunk, self.specs).expect("dataset instances match dataset specs"))
    }
}

/// Batches over the instances of `splits`, in dataset order or shuffled by `rng`.
/// The final batch may be short.
pub fn batch_iterator<'a>(
    dataset: &'a Dataset,
    splits: &[Split],
    batch_size: usize,
    shuffle: bool,
    rng: &mut RandomSource,
) -> Result<BatchIter<'a>> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    let mut instances = dataset.select(splits);
    if shuffle {
        rng.shuffle(&mut instances);
    }
    Ok(BatchIter {
        instances,
        specs: dataset.specs(),
        batch_size,
        pos: 0,
    })
}
