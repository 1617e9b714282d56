//! Losses, optimization, the training loops and checkpoints.

pub mod checkpoint;
mod loss;
mod objective;
mod optim;
mod trainer;

pub use checkpoint::{
    load_checkpoint, load_checkpoint_expecting, read_checkpoint, save_checkpoint, write_checkpoint_to,
    CHECKPOINT_VERSION,
};
pub use loss::{
    consistency_grad, consistency_loss, regression_grad, regression_loss, total_consistency_loss,
    total_regression_loss,
};
pub use objective::{evaluate_objective, MixTargets, ObjectiveOutput, ObjectiveSpec, StepLosses};
pub use optim::{Adam, OptimizerConfig};
pub use trainer::{
    continue_fit, fit, train_epoch, train_epoch_semi, train_supervised, validation_report, Ablation,
    EarlyStopping, EpochRecord, FitOutcome, PhaseRecord, StopDecision, TrainConfig, TrainMode, TrainState,
};
