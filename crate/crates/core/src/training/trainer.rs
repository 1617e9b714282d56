//! Epoch loops: the two-phase semi-supervised epoch, the supervised-only epoch, and
//! `fit`, which adds validation, early stopping and best-parameter tracking.

use serde::{Deserialize, Serialize};

use super::objective::{evaluate_objective, ObjectiveSpec, StepLosses};
use super::optim::{Adam, OptimizerConfig};
use crate::data::{batch_iterator, Dataset};
use crate::error::{Error, Result};
use crate::eval::{predict_split, LabelSource, MetricsReport};
use crate::mixup::MixupDraw;
use crate::model::ModelParameters;
use crate::rng::RandomSource;
use crate::types::{LossWeights, MixupConfig, ModalityKind, ModelConfig, PerTask, Split};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    #[default]
    Supervised,
    Semi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    pub disable_mixup_a: bool,
    pub disable_mixup_v: bool,
    pub disable_unimodal_tasks: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation-MAE improvement before stopping.
    pub early_stop_patience: usize,
    pub optimizer: OptimizerConfig,
    pub loss_weights: LossWeights,
    pub mixup: MixupConfig,
    pub mode: TrainMode,
    pub ablation: Ablation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            max_epochs: 50,
            early_stop_patience: 8,
            optimizer: OptimizerConfig::default(),
            loss_weights: LossWeights::default(),
            mixup: MixupConfig::default(),
            mode: TrainMode::Supervised,
            ablation: Ablation::default(),
        }
    }
}

impl TrainConfig {
    /// Loss weights after the ablation flags are applied.
    pub fn effective_weights(&self) -> LossWeights {
        let mut w = self.loss_weights;
        if self.ablation.disable_mixup_a {
            w.beta.a = 0.0;
        }
        if self.ablation.disable_mixup_v {
            w.beta.v = 0.0;
        }
        if self.ablation.disable_unimodal_tasks {
            w.alpha.t = 0.0;
            w.alpha.a = 0.0;
            w.alpha.v = 0.0;
        }
        w
    }

    pub fn mixup_enabled(&self) -> bool {
        let w = self.effective_weights();
        w.beta.a > 0.0 || w.beta.v > 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("train.max_epochs must be at least 1".into()));
        }
        self.optimizer.validate()?;
        self.loss_weights.validate()?;
        self.effective_weights().validate()?;
        self.mixup.validate()?;
        if self.mixup_enabled() && self.batch_size < 2 {
            return Err(Error::Config("train.batch_size must be at least 2 when mixup is enabled".into()));
        }
        Ok(())
    }
}

/// Mean losses over the steps of one loop.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub steps: usize,
    pub regression: PerTask<f64>,
    pub mix_a: Option<f64>,
    pub mix_v: Option<f64>,
    pub total: f64,
}

#[derive(Default)]
struct PhaseAccumulator {
    steps: usize,
    regression: PerTask<f64>,
    mix: [(f64, usize); 2],
    total: f64,
}

impl PhaseAccumulator {
    fn add(&mut self, losses: &StepLosses) {
        self.steps += 1;
        for task in ModalityKind::TASKS {
            *self.regression.get_mut(task) += losses.regression.get(task);
        }
        for (slot, value) in [losses.mix_a, losses.mix_v].into_iter().enumerate() {
            if let Some(v) = value {
                self.mix[slot].0 += v;
                self.mix[slot].1 += 1;
            }
        }
        self.total += losses.total;
    }

    fn finish(self) -> PhaseRecord {
        let n = self.steps.max(1) as f64;
        let mean = |(sum, count): (f64, usize)| (count > 0).then(|| sum / count as f64);
        let mut regression = self.regression;
        for task in ModalityKind::TASKS {
            *regression.get_mut(task) /= n;
        }
        PhaseRecord {
            steps: self.steps,
            regression,
            mix_a: mean(self.mix[0]),
            mix_v: mean(self.mix[1]),
            total: self.total / n,
        }
    }
}

/// One line of the training history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Optimizer steps taken in this epoch.
    pub steps: usize,
    /// Mixed loop (semi mode) or the only loop (supervised mode).
    pub phase1: PhaseRecord,
    /// Supervised-only loop of semi mode.
    pub phase2: Option<PhaseRecord>,
    pub validation: Option<MetricsReport>,
}

#[derive(Clone, Debug)]
pub struct TrainState {
    pub params: ModelParameters,
    pub optimizer: Adam,
    pub config: TrainConfig,
    pub seed: u64,
    /// Completed epochs.
    pub epoch: usize,
    /// Total optimizer steps.
    pub steps: u64,
    pub best_valid_mae: Option<f64>,
    pub history: Vec<EpochRecord>,
    /// Total loss of every optimizer step, in order.
    pub loss_trace: Vec<f64>,
}

impl TrainState {
    pub fn new(model: &ModelConfig, dataset: &Dataset, config: TrainConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut init_rng = RandomSource::with_stream(seed, 0);
        let params = ModelParameters::init(model, dataset.specs(), &mut init_rng)?;
        let optimizer = Adam::new(config.optimizer, &params.weights);
        Ok(Self {
            params,
            optimizer,
            config,
            seed,
            epoch: 0,
            steps: 0,
            best_valid_mae: None,
            history: Vec::new(),
            loss_trace: Vec::new(),
        })
    }

    /// Randomness for the next epoch; a function of the seed and the epoch number only.
    fn epoch_rng(&self) -> RandomSource {
        RandomSource::with_stream(self.seed, self.epoch as u64 + 1)
    }

    fn step(&mut self, batch: &crate::data::Batch, with_mixup: bool, rng: &mut RandomSource) -> Result<StepLosses> {
        let weights = self.config.effective_weights();
        let draw = with_mixup.then(|| MixupDraw::sample(&self.config.mixup, batch.len(), rng));
        let spec = ObjectiveSpec {
            loss_weights: &weights,
            mixup: draw.as_ref(),
            stop_gradient: self.config.mixup.target_stop_gradient,
            frozen_targets: None,
        };
        self.params.train_mode();
        let out = evaluate_objective(&mut self.params, batch, &spec, rng)?;
        self.params.eval_mode();
        self.optimizer.update(&mut self.params.weights, &out.grads);
        self.steps += 1;
        self.loss_trace.push(out.losses.total);
        Ok(out.losses)
    }

    fn run_loop(&mut self, dataset: &Dataset, splits: &[Split], with_mixup: bool, rng: &mut RandomSource) -> Result<PhaseRecord> {
        let batches = batch_iterator(dataset, splits, self.config.batch_size, true, rng)?;
        let mut acc = PhaseAccumulator::default();
        for batch in batches {
            let losses = self.step(&batch, with_mixup, rng)?;
            acc.add(&losses);
        }
        Ok(acc.finish())
    }
}

fn require_supervised(dataset: &Dataset) -> Result<()> {
    if dataset.split(Split::Train).next().is_none() {
        return Err(Error::Config("training needs at least one supervised (train) instance".into()));
    }
    Ok(())
}

/// Two-loop epoch: train ∪ unlabeled with regression + consistency, then train only
/// with regression.
pub fn train_epoch_semi(state: &mut TrainState, dataset: &Dataset) -> Result<EpochRecord> {
    require_supervised(dataset)?;
    let mut rng = state.epoch_rng();
    let mixup = state.config.mixup_enabled();
    let phase1 = state.run_loop(dataset, &[Split::Train, Split::Unlabeled], mixup, &mut rng)?;
    let phase2 = state.run_loop(dataset, &[Split::Train], false, &mut rng)?;
    state.epoch += 1;
    Ok(EpochRecord {
        epoch: state.epoch,
        steps: phase1.steps + phase2.steps,
        phase1,
        phase2: Some(phase2),
        validation: None,
    })
}

/// One loop over the train split with regression + consistency on labeled data only.
pub fn train_supervised(state: &mut TrainState, dataset: &Dataset) -> Result<EpochRecord> {
    require_supervised(dataset)?;
    let mut rng = state.epoch_rng();
    let mixup = state.config.mixup_enabled();
    let phase1 = state.run_loop(dataset, &[Split::Train], mixup, &mut rng)?;
    state.epoch += 1;
    Ok(EpochRecord {
        epoch: state.epoch,
        steps: phase1.steps,
        phase1,
        phase2: None,
        validation: None,
    })
}

pub fn train_epoch(state: &mut TrainState, dataset: &Dataset) -> Result<EpochRecord> {
    match state.config.mode {
        TrainMode::Semi => train_epoch_semi(state, dataset),
        TrainMode::Supervised => train_supervised(state, dataset),
    }
}

/// Stops after `patience` consecutive epochs without a strict improvement.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<f64>,
    stale: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StopDecision {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            stale: 0,
        }
    }

    pub fn resume(patience: usize, best: Option<f64>) -> Self {
        Self {
            patience,
            best,
            stale: 0,
        }
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn observe(&mut self, value: f64) -> StopDecision {
        let improved = self.best.is_none_or(|b| value < b);
        if improved {
            self.best = Some(value);
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        StopDecision {
            improved,
            stop: self.stale >= self.patience,
        }
    }
}

pub struct FitOutcome {
    /// State after the last epoch run.
    pub state: TrainState,
    /// Parameters at the best validation MAE.
    pub best_params: ModelParameters,
    pub best_epoch: usize,
}

impl FitOutcome {
    /// Final state with the best parameters swapped in; what gets checkpointed.
    pub fn best_state(&self) -> TrainState {
        let mut s = self.state.clone();
        s.params = self.best_params.clone();
        s
    }
}

pub fn validation_report(params: &ModelParameters, dataset: &Dataset) -> Result<MetricsReport> {
    let preds = predict_split(params, dataset, Split::Valid, 64)?;
    preds.report(ModalityKind::Multimodal, LabelSource::Multimodal)
}

/// Trains from scratch until `max_epochs` or early stopping on validation MAE.
pub fn fit(dataset: &Dataset, model: &ModelConfig, config: &TrainConfig, seed: u64) -> Result<FitOutcome> {
    if dataset.split(Split::Valid).next().is_none() {
        return Err(Error::Config("training needs a non-empty valid split".into()));
    }
    require_supervised(dataset)?;
    let state = TrainState::new(model, dataset, config.clone(), seed)?;
    continue_fit(state, dataset)
}

/// Runs further epochs on an existing state, continuing its epoch numbering.
pub fn continue_fit(mut state: TrainState, dataset: &Dataset) -> Result<FitOutcome> {
    if dataset.split(Split::Valid).next().is_none() {
        return Err(Error::Config("training needs a non-empty valid split".into()));
    }
    let mut stopper = EarlyStopping::resume(state.config.early_stop_patience, state.best_valid_mae);
    let mut best_params = state.params.clone();
    let mut best_epoch = state.epoch;
    while state.epoch < state.config.max_epochs {
        let mut record = train_epoch(&mut state, dataset)?;
        let report = validation_report(&state.params, dataset)?;
        let decision = stopper.observe(report.metrics.mae);
        record.validation = Some(report);
        state.history.push(record);
        if decision.improved {
            state.best_valid_mae = stopper.best();
            best_params = state.params.clone();
            best_epoch = state.epoch;
        }
        if decision.stop {
            break;
        }
    }
    Ok(FitOutcome {
        state,
        best_params,
        best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn early_stopping_plateau() {
        let mut es = EarlyStopping::new(5);
        let curve = [0.5, 0.4, 0.3, 0.3, 0.31, 0.35, 0.3, 0.32, 0.2];
        let mut stopped_at = None;
        for (i, &v) in curve.iter().enumerate() {
            if es.observe(v).stop {
                stopped_at = Some(i + 1);
                break;
            }
        }
        assert_eq!(stopped_at, Some(8));
        assert_eq!(es.best(), Some(0.3));
    }

    #[test]
    fn ablation_flags_zero_weights() {
        let cfg = TrainConfig {
            ablation: Ablation {
                disable_mixup_a: true,
                disable_mixup_v: false,
                disable_unimodal_tasks: true,
            },
            ..TrainConfig::default()
        };
        let w = cfg.effective_weights();
        assert_eq!(w.beta.a, 0.0);
        assert_eq!(w.beta.v, 1.0);
        assert_eq!((w.alpha.t, w.alpha.a, w.alpha.v, w.alpha.m), (0.0, 0.0, 0.0, 1.0));
        assert!(cfg.mixup_enabled());
    }

    #[test]
    fn mixup_needs_pairs() {
        let cfg = TrainConfig {
            batch_size: 1,
            ..TrainConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = TrainConfig {
            batch_size: 1,
            ablation: Ablation {
                disable_mixup_a: true,
                disable_mixup_v: true,
                disable_unimodal_tasks: false,
            },
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_ok());
    }
}
