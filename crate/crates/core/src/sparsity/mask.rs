use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::RngStream;

/// Connectivity of one layer: for every output neuron, the ascending list of
/// the `fanin` input indices it reads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerMask {
    n_in: usize,
    fanin: usize,
    inputs: Vec<Vec<usize>>,
}

impl LayerMask {
    /// Validates and canonicalises (sorts) the per-neuron index lists.
    pub fn new(n_in: usize, fanin: usize, mut inputs: Vec<Vec<usize>>) -> Result<Self> {
        if fanin == 0 || fanin > n_in {
            return Err(Error::invalid_arg(format!(
                "fan-in {fanin} outside 1..={n_in}"
            )));
        }
        if inputs.is_empty() {
            return Err(Error::invalid_arg("layer mask without output neurons"));
        }
        for (j, idx) in inputs.iter_mut().enumerate() {
            if idx.len() != fanin {
                return Err(Error::invalid_arg(format!(
                    "neuron {j} has {} inputs, expected {fanin}",
                    idx.len()
                )));
            }
            idx.sort_unstable();
            if idx.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::invalid_arg(format!("neuron {j} repeats an input")));
            }
            if idx.last().is_some_and(|&i| i >= n_in) {
                return Err(Error::invalid_arg(format!(
                    "neuron {j} reads input outside 0..{n_in}"
                )));
            }
        }
        Ok(Self {
            n_in,
            fanin,
            inputs,
        })
    }

    /// Fully connected layer.
    pub fn dense(n_in: usize, n_out: usize) -> Result<Self> {
        Self::new(n_in, n_in, vec![(0..n_in).collect(); n_out])
    }

    /// From an `n_in × n_out` boolean matrix whose columns all hold the same
    /// number of ones.
    pub fn from_dense(active: &Array2<bool>) -> Result<Self> {
        let (n_in, n_out) = active.dim();
        let inputs: Vec<Vec<usize>> = (0..n_out)
            .map(|j| (0..n_in).filter(|&i| active[[i, j]]).collect())
            .collect();
        let fanin = inputs.first().map_or(0, Vec::len);
        if let Some((j, col)) = inputs.iter().enumerate().find(|(_, c)| c.len() != fanin) {
            return Err(Error::invalid_state(format!(
                "neuron {j} has {} active inputs, neuron 0 has {fanin}",
                col.len()
            )));
        }
        Self::new(n_in, fanin, inputs)
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.inputs.len()
    }

    pub fn fanin(&self) -> usize {
        self.fanin
    }

    pub fn inputs(&self, neuron: usize) -> &[usize] {
        &self.inputs[neuron]
    }

    pub fn neurons(&self) -> impl Iterator<Item = &[usize]> {
        self.inputs.iter().map(Vec::as_slice)
    }

    pub fn to_dense(&self) -> Array2<bool> {
        let mut m = Array2::from_elem((self.n_in, self.n_out()), false);
        for (j, idx) in self.inputs.iter().enumerate() {
            for &i in idx {
                m[[i, j]] = true;
            }
        }
        m
    }

    /// Number of neurons reading each input.
    pub fn input_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_in];
        for &i in self.inputs.iter().flatten() {
            counts[i] += 1;
        }
        counts
    }
}

/// Per-layer connectivity of a whole network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMask {
    pub layers: Vec<LayerMask>,
}

impl FeatureMask {
    pub fn new(layers: Vec<LayerMask>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid_arg("feature mask without layers"));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[0].n_out() != pair[1].n_in() {
                return Err(Error::invalid_arg(format!(
                    "layer {l} has {} outputs but layer {} expects {} inputs",
                    pair[0].n_out(),
                    l + 1,
                    pair[1].n_in()
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Fraction of possible connections that are present.
    pub fn density(&self) -> f64 {
        let (on, all) = self.layers.iter().fold((0usize, 0usize), |(on, all), l| {
            (on + l.fanin * l.n_out(), all + l.n_in * l.n_out())
        });
        on as f64 / all as f64
    }
}

/// Each output neuron reads `fanin` distinct inputs drawn uniformly without
/// replacement.
pub fn init_random_mask(
    n_in: usize,
    n_out: usize,
    fanin: usize,
    rng: &mut RngStream,
) -> Result<LayerMask> {
    if n_out == 0 || fanin == 0 || fanin > n_in {
        return Err(Error::invalid_arg(format!(
            "random mask needs 1 <= fanin <= n_in and n_out >= 1, got n_in={n_in} n_out={n_out} fanin={fanin}"
        )));
    }
    let inputs = (0..n_out)
        .map(|_| rng.sample_distinct(n_in, fanin))
        .collect();
    LayerMask::new(n_in, fanin, inputs)
}
