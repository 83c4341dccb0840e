use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{clipped_relu_grad, quantize_grad, QuantizerSpec, RngStream};
use crate::sparsity::{FeatureMask, LayerMask};

use super::config::{LayerSpec, ModelConfig};
use super::loss::softmax_cross_entropy;
use super::neuron::{neuron_preactivation, Activation};
use super::poly::{poly_features_into, poly_input_grad, poly_len};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    /// No quantizers anywhere.
    Full,
    /// Inputs and hidden activations snapped to their quantizer levels.
    Quantized,
}

/// One layer of a fixed-connectivity network. Row `j` of `weights` holds the
/// polynomial coefficients of neuron `j` over its masked inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LutLayer {
    pub spec: LayerSpec,
    pub mask: LayerMask,
    pub weights: Array2<f64>,
    pub bias: Vec<f64>,
    pub in_quant: QuantizerSpec,
    pub out_quant: QuantizerSpec,
    pub activation: Activation,
}

impl LutLayer {
    pub fn n_out(&self) -> usize {
        self.mask.n_out()
    }

    pub fn n_monomials(&self) -> usize {
        self.weights.ncols()
    }

    pub fn neuron_weights(&self, j: usize) -> &[f64] {
        self.weights.row(j).to_slice().expect("standard layout")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub input_quant: QuantizerSpec,
    pub layers: Vec<LutLayer>,
}

#[derive(Debug, Clone)]
pub struct LutGrads {
    pub weights: Vec<Array2<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl LutGrads {
    pub fn zeros_like(model: &TrainedModel) -> Self {
        Self {
            weights: model.layers.iter().map(|l| Array2::zeros(l.weights.dim())).collect(),
            bias: model.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn scale(&mut self, k: f64) {
        for w in &mut self.weights {
            *w *= k;
        }
        for b in self.bias.iter_mut().flatten() {
            *b *= k;
        }
    }
}

struct Trace {
    /// Input vector of every layer (post-quantizer when quantized).
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl TrainedModel {
    /// Fresh weights for the given connectivity. Linear and quadratic
    /// coefficients are `N(0, 1/F)`; constant terms and biases start at 0.
    pub fn init(config: &ModelConfig, mask: &FeatureMask, rng: &mut RngStream) -> Result<Self> {
        config.validate()?;
        check_mask(config, mask)?;
        let input_quant = config.input_quantizer();
        let last = config.layers.len() - 1;
        let mut layers = Vec::with_capacity(config.layers.len());
        let mut in_quant = input_quant;
        for (l, (spec, lm)) in config.layers.iter().zip(&mask.layers).enumerate() {
            let p = poly_len(spec.fanin, spec.degree);
            let scale = 1.0 / (spec.fanin as f64).sqrt();
            let mut weights = Array2::zeros((spec.n_out, p));
            for mut row in weights.rows_mut() {
                for w in row.iter_mut().skip(1) {
                    *w = rng.normal() * scale;
                }
            }
            let out_quant = QuantizerSpec::unit(spec.bits)?;
            layers.push(LutLayer {
                spec: spec.clone(),
                mask: lm.clone(),
                weights,
                bias: vec![0.0; spec.n_out],
                in_quant,
                out_quant,
                activation: if l == last { Activation::Linear } else { Activation::ClippedRelu },
            });
            in_quant = out_quant;
        }
        Ok(Self { input_quant, layers })
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].mask.n_in()
    }

    pub fn n_classes(&self) -> usize {
        self.layers.last().map_or(0, LutLayer::n_out)
    }

    pub fn mask(&self) -> FeatureMask {
        FeatureMask {
            layers: self.layers.iter().map(|l| l.mask.clone()).collect(),
        }
    }

    /// `n_in × n_out` matrix of the linear coefficients, zero off the mask.
    pub fn linear_weight_matrix(&self, layer: usize) -> Array2<f64> {
        let l = &self.layers[layer];
        let mut w = Array2::zeros((l.mask.n_in(), l.n_out()));
        for (j, idx) in l.mask.neurons().enumerate() {
            for (f, &i) in idx.iter().enumerate() {
                w[[i, j]] = l.weights[[j, 1 + f]];
            }
        }
        w
    }

    fn trace(&self, x: &[f64], precision: Precision) -> Trace {
        let quantized = precision == Precision::Quantized;
        let last = self.layers.len() - 1;
        let mut a: Vec<f64> = if quantized {
            x.iter().map(|&v| self.input_quant.quantize(v)).collect()
        } else {
            x.to_vec()
        };
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut gathered = Vec::new();
        let mut phi = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.n_out());
            let mut out = Vec::with_capacity(layer.n_out());
            for (j, idx) in layer.mask.neurons().enumerate() {
                gathered.clear();
                gathered.extend(idx.iter().map(|&i| a[i]));
                poly_features_into(&gathered, layer.spec.degree, &mut phi).expect("validated degree");
                let zj = neuron_preactivation(&phi, layer.neuron_weights(j), layer.bias[j]);
                let mut y = layer.activation.apply(zj);
                if quantized && l < last {
                    y = layer.out_quant.quantize(y);
                }
                z.push(zj);
                out.push(y);
            }
            inputs.push(std::mem::replace(&mut a, out));
            pre.push(z);
        }
        inputs.push(a);
        Trace { inputs, pre }
    }

    /// Logits of a single sample.
    pub fn forward_sample(&self, x: &[f64], precision: Precision) -> Vec<f64> {
        self.trace(x, precision).inputs.pop().unwrap_or_default()
    }

    pub fn logits(&self, x: ArrayView2<f64>, precision: Precision) -> Result<Array2<f64>> {
        self.check_width(x.ncols())?;
        let mut out = Array2::zeros((x.nrows(), self.n_classes()));
        for (row, mut dst) in x.outer_iter().zip(out.outer_iter_mut()) {
            let v = self.forward_sample(&row.to_vec(), precision);
            dst.assign(&ndarray::ArrayView1::from(&v));
        }
        Ok(out)
    }

    /// Backpropagates one sample's cross-entropy into `grads` (summed, not
    /// averaged) and returns its loss. Quantizers use the clipped
    /// straight-through gradient.
    pub fn accumulate_grads(
        &self,
        x: &[f64],
        label: usize,
        precision: Precision,
        grads: &mut LutGrads,
    ) -> Result<f64> {
        self.check_width(x.len())?;
        if label >= self.n_classes() {
            return Err(Error::invalid_arg(format!(
                "label {label} outside 0..{}",
                self.n_classes()
            )));
        }
        let trace = self.trace(x, precision);
        let last = self.layers.len() - 1;
        let (loss, mut da) = softmax_cross_entropy(&trace.inputs[last + 1], label);

        let mut gathered = Vec::new();
        let mut phi = Vec::new();
        let mut gin = Vec::new();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let a_in = &trace.inputs[l];
            let mut da_prev = vec![0.0; a_in.len()];
            for (j, idx) in layer.mask.neurons().enumerate() {
                let zj = trace.pre[l][j];
                let dz = if l == last {
                    da[j]
                } else {
                    let y = layer.activation.apply(zj);
                    let through = if precision == Precision::Quantized {
                        quantize_grad(da[j], y, &layer.out_quant)
                    } else {
                        da[j]
                    };
                    through * clipped_relu_grad(zj)
                };
                if dz == 0.0 {
                    continue;
                }
                gathered.clear();
                gathered.extend(idx.iter().map(|&i| a_in[i]));
                poly_features_into(&gathered, layer.spec.degree, &mut phi).expect("validated degree");
                let mut gw = grads.weights[l].row_mut(j);
                for (g, p) in gw.iter_mut().zip(&phi) {
                    *g += dz * p;
                }
                grads.bias[l][j] += dz;
                if l > 0 {
                    gin.clear();
                    gin.resize(idx.len(), 0.0);
                    poly_input_grad(&gathered, layer.neuron_weights(j), layer.spec.degree, dz, &mut gin);
                    for (&i, g) in idx.iter().zip(&gin) {
                        da_prev[i] += g;
                    }
                }
            }
            da = da_prev;
        }
        Ok(loss)
    }

    /// Output codes of every layer under hardware semantics: inputs coded by
    /// the input quantizer, every layer (the last included) emitting
    /// `code(clipped_relu(z))`.
    pub fn layer_codes(&self, x: &[f64]) -> Result<Vec<Vec<u32>>> {
        self.check_width(x.len())?;
        let mut codes: Vec<u32> = x.iter().map(|&v| self.input_quant.code(v)).collect();
        let mut out = Vec::with_capacity(self.layers.len() + 1);
        let mut gathered = Vec::new();
        let mut phi = Vec::new();
        for layer in &self.layers {
            let mut next = Vec::with_capacity(layer.n_out());
            for (j, idx) in layer.mask.neurons().enumerate() {
                gathered.clear();
                gathered.extend(idx.iter().map(|&i| layer.in_quant.level(codes[i])));
                poly_features_into(&gathered, layer.spec.degree, &mut phi).expect("validated degree");
                let y = Activation::ClippedRelu.apply(neuron_preactivation(
                    &phi,
                    layer.neuron_weights(j),
                    layer.bias[j],
                ));
                next.push(layer.out_quant.code(y));
            }
            out.push(std::mem::replace(&mut codes, next));
        }
        out.push(codes);
        Ok(out)
    }

    fn check_width(&self, n: usize) -> Result<()> {
        if n != self.n_inputs() {
            return Err(Error::invalid_arg(format!(
                "sample has {n} features, model expects {}",
                self.n_inputs()
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_mask(config: &ModelConfig, mask: &FeatureMask) -> Result<()> {
    if mask.layers.len() != config.layers.len() {
        return Err(Error::invalid_arg(format!(
            "mask has {} layers, model has {}",
            mask.layers.len(),
            config.layers.len()
        )));
    }
    for (l, (spec, lm)) in config.layers.iter().zip(&mask.layers).enumerate() {
        if lm.n_in() != spec.n_in || lm.n_out() != spec.n_out || lm.fanin() != spec.fanin {
            return Err(Error::invalid_arg(format!(
                "layer {l}: mask is {}x{} with fan-in {}, model wants {}x{} with fan-in {}",
                lm.n_in(),
                lm.n_out(),
                lm.fanin(),
                spec.n_in,
                spec.n_out,
                spec.fanin
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SparsityMode;
    use crate::sparsity::init_random_mask;

    fn small(degree: u32) -> (ModelConfig, TrainedModel) {
        let cfg = ModelConfig::uniform(&[8, 6, 3], 3, 2, degree, SparsityMode::Random).unwrap();
        let mut rng = RngStream::new(5);
        let mask = FeatureMask::new(
            cfg.layers
                .iter()
                .map(|s| init_random_mask(s.n_in, s.n_out, s.fanin, &mut rng).unwrap())
                .collect(),
        )
        .unwrap();
        let model = TrainedModel::init(&cfg, &mask, &mut rng).unwrap();
        (cfg, model)
    }

    #[test]
    fn linear_matrix_respects_mask() {
        let (_, model) = small(1);
        for l in 0..model.layers.len() {
            let w = model.linear_weight_matrix(l);
            let m = model.layers[l].mask.to_dense();
            for (wv, &on) in w.iter().zip(m.iter()) {
                assert!(on || *wv == 0.0);
            }
        }
    }

    #[test]
    fn mask_mismatch_rejected() {
        let (cfg, model) = small(1);
        let mut wrong = cfg.clone();
        wrong.layers[0].fanin = 2;
        assert!(TrainedModel::init(&wrong, &model.mask(), &mut RngStream::new(0)).is_err());
    }

    #[test]
    fn hidden_codes_agree_with_quantized_forward() {
        let (_, model) = small(2);
        let x = [0.1, 0.9, 0.33, 0.5, 0.0, 0.77, 0.6, 0.25];
        let codes = model.layer_codes(&x).unwrap();
        let trace = model.trace(&x, Precision::Quantized);
        let q = model.layers[0].out_quant;
        let hidden: Vec<f64> = codes[1].iter().map(|&c| q.level(c)).collect();
        assert_eq!(hidden, trace.inputs[1]);
    }
}
