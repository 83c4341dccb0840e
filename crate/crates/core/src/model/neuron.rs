use serde::{Deserialize, Serialize};

use crate::math::{clipped_relu, QuantizerSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// `clamp(z, 0, 1)`.
    ClippedRelu,
    Linear,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::ClippedRelu => clipped_relu(z),
            Activation::Linear => z,
        }
    }
}

/// `Σ_m w_m·φ_m + b`, summed left to right starting from `0.0`. Truth-table
/// enumeration relies on this exact order of floating-point operations.
#[inline]
pub fn neuron_preactivation(features: &[f64], weights: &[f64], bias: f64) -> f64 {
    debug_assert_eq!(features.len(), weights.len());
    let mut acc = 0.0;
    for (phi, w) in features.iter().zip(weights) {
        acc += w * phi;
    }
    acc + bias
}

/// `σ(Σ w·φ + b)`, optionally passed through the output quantizer.
pub fn neuron_forward(
    features: &[f64],
    weights: &[f64],
    bias: f64,
    activation: Activation,
    quantizer: Option<&QuantizerSpec>,
) -> f64 {
    let y = activation.apply(neuron_preactivation(features, weights, bias));
    match quantizer {
        Some(q) => q.quantize(y),
        None => y,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::poly_features;

    #[test]
    fn zero_neuron() {
        let phi = poly_features(&[0.3, 0.9], 1).unwrap();
        assert_eq!(neuron_forward(&phi, &[0.0; 3], 0.0, Activation::ClippedRelu, None), 0.0);
    }

    #[test]
    fn linear_case_and_quantized_level() {
        let phi = poly_features(&[0.25, 0.5], 1).unwrap();
        let w = [0.0, 1.0, 1.0];
        assert_eq!(neuron_forward(&phi, &w, 0.0, Activation::ClippedRelu, None), 0.75);
        let q = QuantizerSpec::unit(2).unwrap();
        assert_eq!(neuron_forward(&phi, &w, 0.0, Activation::ClippedRelu, Some(&q)), 0.75);
    }

    #[test]
    fn clipping() {
        let phi = [1.0];
        assert_eq!(neuron_forward(&phi, &[3.0], 0.0, Activation::ClippedRelu, None), 1.0);
        assert_eq!(neuron_forward(&phi, &[-3.0], 0.0, Activation::ClippedRelu, None), 0.0);
        assert_eq!(neuron_forward(&phi, &[-3.0], 0.5, Activation::Linear, None), -2.5);
    }
}
