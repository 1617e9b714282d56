use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{validate_specs, FeatureSpec, Instance, PerModality, Split};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_supervised: usize,
    pub n_unsupervised: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    specs: PerModality<FeatureSpec>,
    instances: Vec<Instance>,
}

impl Dataset {
    pub fn new(specs: PerModality<FeatureSpec>, instances: Vec<Instance>) -> Result<Self> {
        validate_specs(&specs)?;
        let mut seen = HashSet::new();
        for inst in &instances {
            if !seen.insert(inst.id.as_str()) {
                return Err(Error::Validation(format!("duplicate instance id `{}`", inst.id)));
            }
            for (kind, seq) in inst.features.iter() {
                if seq.spec() != specs.get(kind) {
                    return Err(Error::Validation(format!(
                        "instance `{}`: {kind} shape {}x{} does not match dataset spec {}x{}",
                        inst.id,
                        seq.spec().seq_len,
                        seq.spec().feat_dim,
                        specs.get(kind).seq_len,
                        specs.get(kind).feat_dim
                    )));
                }
            }
        }
        Ok(Self { specs, instances })
    }

    pub fn specs(&self) -> &PerModality<FeatureSpec> {
        &self.specs
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Instance> {
        self.instances.iter().filter(move |i| i.split == split)
    }

    /// Instances whose split is in `splits`, in dataset order.
    pub fn select(&self, splits: &[Split]) -> Vec<&Instance> {
        self.instances.iter().filter(|i| splits.contains(&i.split)).collect()
    }

    pub fn stats(&self) -> DatasetStats {
        let count = |s| self.split(s).count();
        let (train, valid, test) = (count(Split::Train), count(Split::Valid), count(Split::Test));
        DatasetStats {
            n_supervised: train + valid + test,
            n_unsupervised: count(Split::Unlabeled),
            train,
            valid,
            test,
        }
    }
}
