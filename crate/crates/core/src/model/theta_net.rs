use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};

use crate::error::{Error, Result};
use crate::math::{clipped_relu, clipped_relu_grad, RngStream};
use crate::sparsity::{init_connection_state_scaled, ConnectionState};

use super::config::{ModelConfig, SparsityMode};
use super::loss::softmax_cross_entropy;

/// Full-precision network whose weights are `θ·s` connection states; hidden
/// layers use the clipped ReLU, the last layer emits logits.
#[derive(Debug, Clone)]
pub struct ThetaNet {
    pub layers: Vec<ConnectionState>,
    pub biases: Vec<Array1<f64>>,
}

#[derive(Debug, Clone)]
pub struct ThetaGrads {
    /// Mean loss over the batch.
    pub loss: f64,
    /// `∂E/∂θ` per layer (already multiplied by the signs).
    pub theta: Vec<Array2<f64>>,
    pub bias: Vec<Array1<f64>>,
}

impl ThetaNet {
    /// Initial connectivity per mode: DeepR* starts at the target fan-in,
    /// SparseLUT at `initial_fanin` (dense when unset). `W0` is drawn with
    /// standard deviation `1/sqrt(initial fan-in)`.
    pub fn new(config: &ModelConfig, rng: &mut RngStream) -> Result<Self> {
        config.validate()?;
        let mut layers = Vec::with_capacity(config.layers.len());
        let mut biases = Vec::with_capacity(config.layers.len());
        for spec in &config.layers {
            let start = match config.mode {
                SparsityMode::DeeprStar => spec.fanin,
                SparsityMode::Sparselut | SparsityMode::Dense => spec.initial_fanin.unwrap_or(spec.n_in),
                SparsityMode::Random => spec.fanin,
            };
            let scale = 1.0 / (start as f64).sqrt();
            layers.push(init_connection_state_scaled(
                spec.n_in, spec.n_out, start, spec.fanin, scale, rng,
            )?);
            biases.push(Array1::zeros(spec.n_out));
        }
        Ok(Self { layers, biases })
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].n_in()
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.n_inputs() {
            return Err(Error::invalid_arg(format!(
                "batch has {} features, network expects {}",
                x.ncols(),
                self.n_inputs()
            )));
        }
        Ok(())
    }

    pub fn logits(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let last = self.layers.len() - 1;
        let mut a = x.to_owned();
        for (l, (state, b)) in self.layers.iter().zip(&self.biases).enumerate() {
            let mut z = a.dot(&state.effective_weights());
            z += b;
            if l < last {
                z.mapv_inplace(clipped_relu);
            }
            a = z;
        }
        Ok(a)
    }

    pub fn loss(&self, x: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
        let logits = self.logits(x)?;
        let total: f64 = logits
            .outer_iter()
            .zip(labels)
            .map(|(row, &y)| softmax_cross_entropy(row.as_slice().unwrap(), y).0)
            .sum();
        Ok(total / labels.len() as f64)
    }

    pub fn loss_and_grads(&self, x: ArrayView2<f64>, labels: &[usize]) -> Result<ThetaGrads> {
        self.check_input(&x)?;
        if labels.len() != x.nrows() || labels.is_empty() {
            return Err(Error::invalid_arg("label count must match a non-empty batch"));
        }
        let n = labels.len() as f64;
        let last = self.layers.len() - 1;

        let weights: Vec<Array2<f64>> = self.layers.iter().map(|s| s.effective_weights()).collect();
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.to_owned();
        for (l, (w, b)) in weights.iter().zip(&self.biases).enumerate() {
            let mut z = a.dot(w);
            z += b;
            let next = if l < last { z.mapv(clipped_relu) } else { z.clone() };
            inputs.push(a);
            pre.push(z);
            a = next;
        }

        let mut loss = 0.0;
        let mut dz = Array2::zeros(a.dim());
        for ((row, &y), mut drow) in a.outer_iter().zip(labels).zip(dz.outer_iter_mut()) {
            if y >= row.len() {
                return Err(Error::invalid_arg(format!("label {y} outside 0..{}", row.len())));
            }
            let (l, g) = softmax_cross_entropy(row.as_slice().unwrap(), y);
            loss += l;
            for (d, gv) in drow.iter_mut().zip(g) {
                *d = gv / n;
            }
        }

        let mut theta = vec![Array2::zeros((0, 0)); self.layers.len()];
        let mut bias = vec![Array1::zeros(0); self.layers.len()];
        for l in (0..self.layers.len()).rev() {
            let dw = inputs[l].t().dot(&dz);
            bias[l] = dz.sum_axis(Axis(0));
            theta[l] = self.layers[l].theta_grad(&dw)?;
            if l > 0 {
                let mut da = dz.dot(&weights[l].t());
                Zip::from(&mut da)
                    .and(&pre[l - 1])
                    .for_each(|d, &z| *d *= clipped_relu_grad(z));
                dz = da;
            }
        }
        Ok(ThetaGrads {
            loss: loss / n,
            theta,
            bias,
        })
    }
}
