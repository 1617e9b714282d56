//! Multitask late-fusion model with hand-written backpropagation.

mod batchnorm;
mod head;
mod layers;
mod lstm;
mod network;

pub use batchnorm::{BatchNorm, RunningStats, BN_EPS, BN_MOMENTUM};
pub use head::{Head, HeadArch, HeadCache};
pub use layers::{ffn_layer, Activation, Linear, Params};
pub use lstm::{BiLstm, BiLstmLayer, LstmDirection};
pub use network::{
    fuse, EncodedBatch, ForwardOutput, FusedRepresentation, ModelParameters, PredictionSet, SequenceEncoder,
    TextEncoder, UnimodalRepresentation, Weights,
};
pub(crate) use layers::to_f32_grid;
