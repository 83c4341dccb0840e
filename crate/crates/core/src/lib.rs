//! Connectivity learning for LUT-based neural networks.
//!
//! Every neuron of a LUT network reads a fixed number `F` of its `N` possible
//! inputs, so that its transfer function can be tabulated over `β·F` input
//! bits and mapped onto FPGA lookup tables. This crate learns *which* inputs
//! each neuron should read, instead of drawing them at random:
//!
//! * [`sparsity`] holds the connection parameterisation (a trainable
//!   magnitude `θ` and a frozen sign per connection) and the rewiring steps
//!   that drive every neuron to exactly `F` active inputs.
//! * [`model`] trains networks with that parameterisation to obtain a
//!   [`FeatureMask`], then retrains a quantized network frozen to the mask.
//! * [`lut`] enumerates each trained neuron into a truth table and emits
//!   Verilog.
//! * [`harness`] covers datasets, configuration, file formats and the
//!   experiment driver behind the `sparselut` binary.

pub mod error;
pub mod harness;
pub mod lut;
pub mod math;
pub mod model;
pub mod sparsity;

pub use error::{Error, Result};
pub use math::{QuantizerSpec, RngStream};
pub use sparsity::{ConnectionState, FeatureMask, LayerMask, RewiringSchedule};
