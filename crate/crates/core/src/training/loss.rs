//! L1 regression and mixup-consistency losses with their (sub)gradients.

use ndarray::{Array1, ArrayView1};

use crate::types::{LossWeights, MixWeights, ModalityKind, PerTask};

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean absolute error over masked-in instances; 0 when nothing is masked in.
pub fn regression_loss(predictions: ArrayView1<'_, f64>, labels: ArrayView1<'_, f64>, mask: ArrayView1<'_, f64>) -> f64 {
    let n: f64 = mask.sum();
    if n == 0.0 {
        return 0.0;
    }
    let total: f64 = predictions
        .iter()
        .zip(labels)
        .zip(mask)
        .filter(|(_, &m)| m > 0.0)
        .map(|((p, y), _)| (p - y).abs())
        .sum();
    total / n
}

/// d(regression_loss)/d(predictions).
pub fn regression_grad(
    predictions: ArrayView1<'_, f64>,
    labels: ArrayView1<'_, f64>,
    mask: ArrayView1<'_, f64>,
) -> Array1<f64> {
    let n: f64 = mask.sum();
    if n == 0.0 {
        return Array1::zeros(predictions.len());
    }
    Array1::from_shape_fn(predictions.len(), |i| {
        if mask[i] > 0.0 {
            sign(predictions[i] - labels[i]) / n
        } else {
            0.0
        }
    })
}

/// `Σ_k α_k · L_r^(k)` over the four tasks.
pub fn total_regression_loss(losses: &PerTask<f64>, weights: &LossWeights) -> f64 {
    ModalityKind::TASKS
        .iter()
        .map(|&k| weights.alpha.get(k) * losses.get(k))
        .sum()
}

/// Mean absolute gap between predictions on mixed representations and mixed targets.
pub fn consistency_loss(mixed_predictions: ArrayView1<'_, f64>, mixed_targets: ArrayView1<'_, f64>) -> f64 {
    if mixed_predictions.is_empty() {
        return 0.0;
    }
    let total: f64 = mixed_predictions
        .iter()
        .zip(mixed_targets)
        .map(|(p, t)| (p - t).abs())
        .sum();
    total / mixed_predictions.len() as f64
}

/// d(consistency_loss)/d(mixed_predictions); the target side is the negation.
pub fn consistency_grad(mixed_predictions: ArrayView1<'_, f64>, mixed_targets: ArrayView1<'_, f64>) -> Array1<f64> {
    let n = mixed_predictions.len().max(1) as f64;
    Array1::from_shape_fn(mixed_predictions.len(), |i| {
        sign(mixed_predictions[i] - mixed_targets[i]) / n
    })
}

/// `β_a · L_mix^(a) + β_v · L_mix^(v)`.
pub fn total_consistency_loss(losses: &MixWeights, beta: &MixWeights) -> f64 {
    beta.a * losses.a + beta.v * losses.v
}
