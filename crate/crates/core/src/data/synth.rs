//! Synthetic multimodal sentiment data with a known latent score.
//!
//! Each instance draws a latent sentiment `s` from the 11-point grid. Every modality sees
//! its own noisy view `s_k = clamp(s + noise)`, written into each valid row along a fixed
//! random direction, on top of a per-instance nuisance offset and per-row noise.
//! Unimodal labels are the grid-quantized `s_k`; the multimodal label is `s`.

use ndarray::{Array1, Array2};

use super::Dataset;
use crate::error::Result;
use crate::rng::RandomSource;
use crate::types::{
    label_grid, FeatureSequence, FeatureSpec, Instance, LabelSet, ModalityKind, PerModality, Split,
};

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticOptions {
    /// Scale of the sentiment direction per modality.
    pub signal: PerModality<f64>,
    /// Std of each modality's deviation from the latent score.
    pub view_noise: f64,
    pub nuisance_std: f64,
    pub row_noise_std: f64,
    /// Fractions of labeled instances assigned to train and valid; the rest is test.
    pub train_fraction: f64,
    pub valid_fraction: f64,
}

impl Default for SyntheticOptions {
    fn default() -> Self {
        Self {
            // visual strongest, acoustic weakest
            signal: PerModality::new(0.6, 0.3, 0.9),
            view_noise: 0.25,
            nuisance_std: 0.5,
            row_noise_std: 1.0,
            train_fraction: 0.62,
            valid_fraction: 0.15,
        }
    }
}

fn quantize(x: f64) -> f64 {
    ((x.clamp(-1.0, 1.0) * 5.0).round() / 5.0) + 0.0
}

/// Default-option synthetic dataset.
pub fn generate_synthetic(
    n_labeled: usize,
    n_unlabeled: usize,
    specs: &PerModality<FeatureSpec>,
    seed: u64,
) -> Result<Dataset> {
    SyntheticOptions::default().generate(n_labeled, n_unlabeled, specs, seed)
}

impl SyntheticOptions {
    pub fn generate(
        &self,
        n_labeled: usize,
        n_unlabeled: usize,
        specs: &PerModality<FeatureSpec>,
        seed: u64,
    ) -> Result<Dataset> {
        crate::types::validate_specs(specs)?;
        let mut rng = RandomSource::new(seed);
        let probes = specs.map(|_, s| Array1::from_shape_simple_fn(s.feat_dim, || rng.normal()));

        let n_train = (n_labeled as f64 * self.train_fraction).round() as usize;
        let n_valid = ((n_labeled as f64 * self.valid_fraction).round() as usize).min(n_labeled - n_train);
        let mut splits: Vec<Split> = (0..n_labeled)
            .map(|i| {
                if i < n_train {
                    Split::Train
                } else if i < n_train + n_valid {
                    Split::Valid
                } else {
                    Split::Test
                }
            })
            .collect();
        rng.shuffle(&mut splits);

        let grid = label_grid();
        let mut instances = Vec::with_capacity(n_labeled + n_unlabeled);
        for i in 0..n_labeled + n_unlabeled {
            let latent = grid[rng.below(grid.len())];
            let mut views = PerModality::new(0.0, 0.0, 0.0);
            for kind in ModalityKind::FEATURES {
                *views.get_mut(kind) = (latent + self.view_noise * rng.normal()).clamp(-1.0, 1.0);
            }
            let mut features = specs.map(|_, s| FeatureSequence::zeros(*s));
            for kind in ModalityKind::FEATURES {
                let spec = specs.get(kind);
                let min_len = (spec.seq_len / 2).max(1);
                let len = min_len + rng.below(spec.seq_len - min_len + 1);
                let nuisance = Array1::from_shape_simple_fn(spec.feat_dim, || self.nuisance_std * rng.normal());
                let mut values = Array2::<f32>::zeros((spec.seq_len, spec.feat_dim));
                let amp = self.signal.get(kind) * views.get(kind);
                for t in 0..len {
                    for j in 0..spec.feat_dim {
                        let x = amp * probes.get(kind)[j] + nuisance[j] + self.row_noise_std * rng.normal();
                        values[[t, j]] = x as f32;
                    }
                }
                *features.get_mut(kind) = FeatureSequence::new(*spec, values, len)?;
            }
            let (id, split, labels) = if i < n_labeled {
                let labels = LabelSet::new(
                    latent,
                    quantize(views.text),
                    quantize(views.acoustic),
                    quantize(views.visual),
                )?;
                (format!("s{i:05}"), splits[i], Some(labels))
            } else {
                (format!("u{:05}", i - n_labeled), Split::Unlabeled, None)
            };
            instances.push(Instance::new(id, split, features, labels)?);
        }
        Dataset::new(specs.clone(), instances)
    }
}
