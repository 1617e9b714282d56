#![allow(dead_code)]

use avmc_core::data::{Batch, Dataset, SyntheticOptions};
use avmc_core::mixup::MixupDraw;
use avmc_core::model::{ModelParameters, Params};
use avmc_core::training::{evaluate_objective, ObjectiveSpec};
use avmc_core::{FeatureSpec, LossWeights, ModalityKind, ModelConfig, PerModality, RandomSource, Split};

pub fn toy_specs() -> PerModality<FeatureSpec> {
    PerModality::new(
        FeatureSpec::new(ModalityKind::Text, 4, 5).unwrap(),
        FeatureSpec::new(ModalityKind::Acoustic, 6, 3).unwrap(),
        FeatureSpec::new(ModalityKind::Visual, 5, 4).unwrap(),
    )
}

pub fn toy_config() -> ModelConfig {
    ModelConfig {
        hidden_dims: PerModality::new(4, 4, 4),
        ..ModelConfig::default()
    }
}

/// Two labeled and one unlabeled instance; labels mask the last row.
pub fn toy_batch(seed: u64) -> (Dataset, Batch) {
    let opts = SyntheticOptions {
        train_fraction: 1.0,
        valid_fraction: 0.0,
        ..SyntheticOptions::default()
    };
    let data = opts.generate(2, 1, &toy_specs(), seed).unwrap();
    let batch = Batch::from_instances(&data.select(&[Split::Train, Split::Unlabeled]), data.specs()).unwrap();
    (data, batch)
}

pub fn flat_params(params: &ModelParameters) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    params.weights.visit("", &mut |name, t| {
        for (i, &v) in t.iter().enumerate() {
            out.push((format!("{name}[{i}]"), v));
        }
    });
    out
}

pub fn perturb(params: &mut ModelParameters, index: usize, delta: f64) {
    let mut offset = 0;
    params.weights.visit_mut("", &mut |_, mut t| {
        let n = t.len();
        if (offset..offset + n).contains(&index) {
            let slot = t.iter_mut().nth(index - offset).unwrap();
            *slot += delta;
        }
        offset += n;
    });
}

pub struct GradCheck {
    pub n_params: usize,
    /// Weights with a non-zero analytic gradient.
    pub n_nonzero: usize,
    pub max_rel: f64,
    pub worst: String,
}

/// Relative error with a small floor so that two tiny gradients compare by their
/// absolute difference.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-6)
}

/// Central differences of the full objective (regression + consistency on both
/// streams) against the analytic gradient, for every weight.
pub fn gradient_check(seed: u64, stop_gradient: bool, step: f64) -> GradCheck {
    let (_, batch) = toy_batch(seed);
    let mut rng = RandomSource::new(seed);
    let params = ModelParameters::init(&toy_config(), &toy_specs(), &mut rng).unwrap();
    let draw = MixupDraw::new(0.37, vec![2, 0, 1]).unwrap();
    let weights = LossWeights::default();

    let spec = ObjectiveSpec {
        loss_weights: &weights,
        mixup: Some(&draw),
        stop_gradient,
        frozen_targets: None,
    };
    let mut p = params.clone();
    p.train_mode();
    let analytic = evaluate_objective(&mut p, &batch, &spec, &mut RandomSource::new(0)).unwrap();
    let frozen = analytic.targets.clone();
    let frozen_spec = ObjectiveSpec {
        frozen_targets: stop_gradient.then_some(&frozen),
        ..spec.clone()
    };

    let mut grads = Vec::new();
    analytic.grads.visit("", &mut |_, t| grads.extend(t.iter().copied()));
    let names = flat_params(&params);
    let loss_at = |index: usize, delta: f64| {
        let mut p = params.clone();
        p.train_mode();
        perturb(&mut p, index, delta);
        evaluate_objective(&mut p, &batch, &frozen_spec, &mut RandomSource::new(0))
            .unwrap()
            .losses
            .total
    };

    let mut max_rel = 0.0;
    let mut worst = String::new();
    for (i, (name, _)) in names.iter().enumerate() {
        let numeric = (loss_at(i, step) - loss_at(i, -step)) / (2.0 * step);
        let rel = rel_error(grads[i], numeric);
        if rel > max_rel {
            max_rel = rel;
            worst = format!("{name}: analytic {:.3e}, numeric {numeric:.3e}", grads[i]);
        }
    }
    GradCheck {
        n_params: names.len(),
        n_nonzero: grads.iter().filter(|g| **g != 0.0).count(),
        max_rel,
        worst,
    }
}
