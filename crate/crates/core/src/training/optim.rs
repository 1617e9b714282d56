use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Params, Weights};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            clip_norm: Some(5.0),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0
            && self.clip_norm.is_none_or(|c| c > 0.0);
        if !ok {
            return Err(Error::Config("train.optimizer has an out-of-range setting".into()));
        }
        Ok(())
    }
}

/// Adam with optional L2 weight decay and global-norm clipping.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: OptimizerConfig,
    pub step: u64,
    /// First and second moments, in parameter visit order.
    pub first: Vec<ArrayD<f64>>,
    pub second: Vec<ArrayD<f64>>,
}

impl Adam {
    pub fn new(config: OptimizerConfig, params: &Weights) -> Self {
        let mut first = Vec::new();
        params.visit("", &mut |_, t| first.push(ArrayD::zeros(t.shape())));
        let second = first.clone();
        Self {
            config,
            step: 0,
            first,
            second,
        }
    }

    /// Applies one update and returns the gradient norm before clipping.
    pub fn update(&mut self, params: &mut Weights, grads: &Weights) -> f64 {
        let norm = grads.sum_of_squares().sqrt();
        let scale = match self.config.clip_norm {
            Some(max) if norm > max => max / norm,
            _ => 1.0,
        };
        let mut g = Vec::with_capacity(self.first.len());
        grads.visit("", &mut |_, t| g.push(t.mapv(|x| x * scale)));

        self.step += 1;
        let c = self.config;
        let bias1 = 1.0 - c.beta1.powi(self.step as i32);
        let bias2 = 1.0 - c.beta2.powi(self.step as i32);
        let (first, second) = (&mut self.first, &mut self.second);
        let mut i = 0;
        params.visit_mut("", &mut |_, mut p| {
            let (m, v, g) = (&mut first[i], &mut second[i], &mut g[i]);
            if c.weight_decay > 0.0 {
                g.zip_mut_with(&p, |g, &w| *g += c.weight_decay * w);
            }
            m.zip_mut_with(g, |m, &g| *m = c.beta1 * *m + (1.0 - c.beta1) * g);
            v.zip_mut_with(g, |v, &g| *v = c.beta2 * *v + (1.0 - c.beta2) * g * g);
            ndarray::Zip::from(&mut p).and(&*m).and(&*v).for_each(|w, &m, &v| {
                let update = c.learning_rate * (m / bias1) / ((v / bias2).sqrt() + c.eps);
                *w = crate::model::to_f32_grid(*w - update);
            });
            i += 1;
        });
        norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParameters;
    use crate::rng::RandomSource;
    use crate::types::{FeatureSpec, ModelConfig, PerModality};

    fn tiny() -> ModelParameters {
        let cfg = ModelConfig {
            hidden_dims: PerModality::new(2, 2, 2),
            ..ModelConfig::default()
        };
        ModelParameters::init(&cfg, &FeatureSpec::small(), &mut RandomSource::new(0)).unwrap()
    }

    #[test]
    fn first_step_moves_each_weight_by_lr() {
        let mut model = tiny();
        let before = model.weights.clone();
        let mut grads = model.weights.zeros_like();
        grads.fill(1e-3);
        let mut adam = Adam::new(
            OptimizerConfig {
                learning_rate: 0.01,
                clip_norm: None,
                ..OptimizerConfig::default()
            },
            &model.weights,
        );
        adam.update(&mut model.weights, &grads);
        let mut diffs = Vec::new();
        before.visit("", &mut |_, t| diffs.extend(t.iter().copied()));
        let mut k = 0;
        model.weights.visit("", &mut |_, t| {
            for &w in t.iter() {
                let d = diffs[k] - w;
                assert!((d - 0.01).abs() < 1e-4, "moved by {d}");
                k += 1;
            }
        });
    }

    #[test]
    fn clipping_reports_raw_norm() {
        let mut model = tiny();
        let mut grads = model.weights.zeros_like();
        grads.fill(10.0);
        let n = grads.num_params() as f64;
        let mut adam = Adam::new(OptimizerConfig::default(), &model.weights);
        let norm = adam.update(&mut model.weights, &grads);
        assert!((norm - 10.0 * n.sqrt()).abs() < 1e-6);
        assert_eq!(adam.step, 1);
    }
}
