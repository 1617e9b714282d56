//! One training-mode evaluation of the full objective
//! `Σ α_k L_r^(k) + Σ β_k L_mix^(k)` with its gradient.

use ndarray::{s, Array1, Array2};
use serde::{Deserialize, Serialize};

use super::loss::{consistency_grad, consistency_loss, regression_grad, regression_loss};
use crate::data::Batch;
use crate::error::Result;
use crate::mixup::{mix_rows, mix_values, MixupDraw};
use crate::model::{ModelParameters, Weights};
use crate::rng::RandomSource;
use crate::types::{LossWeights, ModalityKind, PerModality, PerTask};

/// Loss values of one step. Mixup entries are `None` for disabled streams.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLosses {
    pub regression: PerTask<f64>,
    pub mix_a: Option<f64>,
    pub mix_v: Option<f64>,
    pub total: f64,
}

/// Mixed consistency targets `ŷ′` per stream.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MixTargets {
    pub acoustic: Option<Array1<f64>>,
    pub visual: Option<Array1<f64>>,
}

impl MixTargets {
    fn get(&self, kind: ModalityKind) -> Option<&Array1<f64>> {
        match kind {
            ModalityKind::Acoustic => self.acoustic.as_ref(),
            ModalityKind::Visual => self.visual.as_ref(),
            _ => None,
        }
    }

    fn set(&mut self, kind: ModalityKind, value: Array1<f64>) {
        match kind {
            ModalityKind::Acoustic => self.acoustic = Some(value),
            ModalityKind::Visual => self.visual = Some(value),
            _ => {}
        }
    }
}

#[derive(Clone, Debug)]
pub struct ObjectiveSpec<'a> {
    pub loss_weights: &'a LossWeights,
    /// Pairing and λ for the consistency terms; `None` means regression only.
    pub mixup: Option<&'a MixupDraw>,
    /// Treat `ŷ′` as a constant.
    pub stop_gradient: bool,
    /// Replaces the computed `ŷ′`; lets finite-difference checks hold the target fixed.
    pub frozen_targets: Option<&'a MixTargets>,
}

#[derive(Clone, Debug)]
pub struct ObjectiveOutput {
    pub losses: StepLosses,
    pub grads: Weights,
    pub targets: MixTargets,
    pub predictions: PerTask<Array1<f64>>,
}

const MIX_STREAMS: [ModalityKind; 2] = [ModalityKind::Acoustic, ModalityKind::Visual];

/// Runs the training-mode forward pass (updating batch-norm running statistics) and
/// backpropagates the combined loss.
pub fn evaluate_objective(
    params: &mut ModelParameters,
    batch: &Batch,
    spec: &ObjectiveSpec<'_>,
    rng: &mut RandomSource,
) -> Result<ObjectiveOutput> {
    let act = params.config.activation;
    let dropout = params.config.dropout;
    let weights = spec.loss_weights;
    let encoded = params.encode_batch(batch)?;
    let fused = encoded.fused();
    let n = batch.len();

    let mut predictions = PerTask::splat(Array1::zeros(0));
    let mut caches = Vec::with_capacity(4);
    for task in ModalityKind::TASKS {
        let input = match task {
            ModalityKind::Multimodal => fused.view(),
            k => encoded.reps.get(k).view(),
        };
        let (y, cache) = params.weights.heads.get(task).forward_train(
            input,
            params.running.get_mut(task).as_mut(),
            act,
            dropout,
            rng,
        );
        *predictions.get_mut(task) = y;
        caches.push(cache);
    }

    let mut regression = PerTask::splat(0.0);
    let mut d_pred = PerTask::splat(Array1::<f64>::zeros(n));
    for task in ModalityKind::TASKS {
        let (y, labels, mask) = (predictions.get(task), batch.labels.get(task), batch.masks.get(task));
        *regression.get_mut(task) = regression_loss(y.view(), labels.view(), mask.view());
        let alpha = *weights.alpha.get(task);
        if alpha != 0.0 {
            *d_pred.get_mut(task) = regression_grad(y.view(), labels.view(), mask.view()) * alpha;
        }
    }
    let mut total: f64 = ModalityKind::TASKS
        .iter()
        .map(|&k| weights.alpha.get(k) * regression.get(k))
        .sum();

    let mut grads = params.weights.zeros_like();
    let mut d_reps: PerModality<Array2<f64>> = encoded.reps.map(|_, r| Array2::zeros(r.dim()));
    let mut targets = MixTargets::default();
    let mut mix_losses = [None, None];

    if let Some(draw) = spec.mixup {
        let lambda = draw.lambda();
        let perm = draw.permutation();
        for (slot, kind) in MIX_STREAMS.into_iter().enumerate() {
            let beta = weights.beta.get(kind);
            if beta == 0.0 {
                continue;
            }
            let target = match spec.frozen_targets.and_then(|f| f.get(kind)) {
                Some(t) => t.clone(),
                None => mix_values(predictions.get(kind).view(), draw),
            };
            let mixed = mix_rows(encoded.reps.get(kind).view(), draw);
            let head = params.weights.heads.get(kind);
            let (y_mixed, cache) =
                head.forward_train(mixed.view(), params.running.get_mut(kind).as_mut(), act, dropout, rng);
            let loss = consistency_loss(y_mixed.view(), target.view());
            total += beta * loss;
            mix_losses[slot] = Some(loss);

            let d_mixed_pred = consistency_grad(y_mixed.view(), target.view()) * beta;
            if !spec.stop_gradient {
                // ŷ′_i = λ ŷ_i + (1−λ) ŷ_perm(i), and dL/dŷ′ = −dL/dŷ″.
                let d_pred_k = d_pred.get_mut(kind);
                for i in 0..n {
                    d_pred_k[i] -= lambda * d_mixed_pred[i];
                    d_pred_k[perm[i]] -= (1.0 - lambda) * d_mixed_pred[i];
                }
            }
            let d_mixed = head.backward(&cache, d_mixed_pred.view(), act, grads.heads.get_mut(kind));
            let d_rep = d_reps.get_mut(kind);
            for i in 0..n {
                d_rep.row_mut(i).scaled_add(lambda, &d_mixed.row(i));
                d_rep.row_mut(perm[i]).scaled_add(1.0 - lambda, &d_mixed.row(i));
            }
            targets.set(kind, target);
        }
    }

    for (task, cache) in ModalityKind::TASKS.into_iter().zip(&caches) {
        let d_y = d_pred.get(task);
        if d_y.iter().all(|&g| g == 0.0) {
            continue;
        }
        let d_in = params
            .weights
            .heads
            .get(task)
            .backward(cache, d_y.view(), act, grads.heads.get_mut(task));
        match task {
            ModalityKind::Multimodal => {
                let ht = params.config.hidden_dims.text;
                let ha = params.config.hidden_dims.acoustic;
                d_reps.text += &d_in.slice(s![.., ..ht]);
                d_reps.acoustic += &d_in.slice(s![.., ht..ht + ha]);
                d_reps.visual += &d_in.slice(s![.., ht + ha..]);
            }
            k => *d_reps.get_mut(k) += &d_in,
        }
    }
    params.backward_encoders(&encoded, &d_reps, &mut grads);

    Ok(ObjectiveOutput {
        losses: StepLosses {
            regression,
            mix_a: mix_losses[0],
            mix_v: mix_losses[1],
            total,
        },
        grads,
        targets,
        predictions,
    })
}
