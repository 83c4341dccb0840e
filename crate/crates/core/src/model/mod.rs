//! LUT-style networks: mask derivation with trainable connectivity,
//! quantized retraining under a frozen mask, and evaluation.

mod config;
mod loss;
mod lut_net;
mod neuron;
mod poly;
mod theta_net;
mod train;

pub use config::{LayerSpec, ModelConfig, SparsityMode, TrainConfig};
pub use loss::{softmax, softmax_cross_entropy};
pub use lut_net::{LutGrads, LutLayer, Precision, TrainedModel};
pub use neuron::{neuron_forward, neuron_preactivation, Activation};
pub use poly::{poly_features, poly_features_into, poly_input_grad, poly_len};
pub use theta_net::ThetaNet;
pub use train::{
    derive_mask, evaluate, retrain, Classifier, MaskDerivation, RetrainOutcome,
};
