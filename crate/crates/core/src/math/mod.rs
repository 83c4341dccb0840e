//! Numerical substrate shared by training and table compilation.

mod optim;
mod quant;
mod rng;

pub use optim::{optimizer_update, AdamWConfig, OptimizerState};
pub use quant::{clipped_relu, clipped_relu_grad, quantize, quantize_grad, QuantizerSpec};
pub use rng::{standard_normal_matrix, RngStream};
