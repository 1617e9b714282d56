//! AV-MC: semi-supervised multimodal sentiment regression with text, acoustic and
//! visual encoders, late fusion, per-modality heads and representation-level mixup
//! consistency on the acoustic and visual streams.

pub mod data;
pub mod error;
pub mod eval;
pub mod mixup;
pub mod model;
pub mod rng;
pub mod training;
pub mod types;

pub use error::{Error, Result};
pub use rng::RandomSource;
pub use types::{
    FeatureSequence, FeatureSpec, Instance, LabelSet, LossWeights, MixupConfig, ModalityKind, ModelConfig,
    PerModality, PerTask, Split,
};
