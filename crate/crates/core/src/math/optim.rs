//! AdamW with decoupled weight decay.
//!
//! ```text
//! p ← p·(1 − η·λ)                     (skipped when decay is off for the slot)
//! m ← β₁·m + (1 − β₁)·g
//! v ← β₂·v + (1 − β₂)·g²
//! p ← p − η·m̂ / (√v̂ + ε),   m̂ = m/(1 − β₁ᵗ),  v̂ = v/(1 − β₂ᵗ)
//! ```
//!
//! Parameters are registered as slots. A slot can be updated under an
//! activity mask: masked-out entries keep their value and have their moments
//! reset, so a connection that is later reactivated starts with fresh moments.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub config: AdamWConfig,
    step: u64,
    slots: Vec<Moments>,
}

impl OptimizerState {
    pub fn new(config: AdamWConfig) -> Self {
        Self {
            config,
            step: 0,
            slots: Vec::new(),
        }
    }

    /// Registers a parameter tensor of `len` entries and returns its slot id.
    pub fn register(&mut self, len: usize) -> usize {
        self.slots.push(Moments {
            m: vec![0.0; len],
            v: vec![0.0; len],
        });
        self.slots.len() - 1
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Advances the shared step counter. Call once per optimizer step,
    /// before updating the slots.
    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    pub fn update(
        &mut self,
        slot: usize,
        params: &mut [f64],
        grads: &[f64],
        active: Option<&[bool]>,
        decay: bool,
    ) -> Result<()> {
        if self.step == 0 {
            return Err(Error::invalid_state("optimizer update before begin_step"));
        }
        let moments = self
            .slots
            .get_mut(slot)
            .ok_or_else(|| Error::invalid_arg(format!("unknown optimizer slot {slot}")))?;
        if params.len() != grads.len() || params.len() != moments.m.len() {
            return Err(Error::invalid_arg(format!(
                "optimizer shape mismatch: params {}, grads {}, slot {}",
                params.len(),
                grads.len(),
                moments.m.len()
            )));
        }
        if let Some(mask) = active {
            if mask.len() != params.len() {
                return Err(Error::invalid_arg("optimizer mask length mismatch"));
            }
        }

        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let shrink = if decay { 1.0 - c.lr * c.weight_decay } else { 1.0 };

        for i in 0..params.len() {
            if let Some(mask) = active {
                if !mask[i] {
                    moments.m[i] = 0.0;
                    moments.v[i] = 0.0;
                    continue;
                }
            }
            let g = grads[i];
            let m = c.beta1 * moments.m[i] + (1.0 - c.beta1) * g;
            let v = c.beta2 * moments.v[i] + (1.0 - c.beta2) * g * g;
            moments.m[i] = m;
            moments.v[i] = v;
            let m_hat = m / bc1;
            let v_hat = v / bc2;
            params[i] = params[i] * shrink - c.lr * m_hat / (v_hat.sqrt() + c.eps);
        }
        Ok(())
    }
}

/// Single-tensor convenience: registers the tensor on first use (slot 0),
/// advances the step and applies one decayed update.
pub fn optimizer_update(
    params: &mut Array2<f64>,
    grads: &Array2<f64>,
    state: &mut OptimizerState,
) -> Result<()> {
    if params.dim() != grads.dim() {
        return Err(Error::invalid_arg(format!(
            "optimizer shape mismatch: params {:?}, grads {:?}",
            params.dim(),
            grads.dim()
        )));
    }
    if state.slots.is_empty() {
        state.register(params.len());
    }
    state.begin_step();
    let p = params
        .as_slice_mut()
        .ok_or_else(|| Error::invalid_arg("params must be contiguous"))?;
    let g = grads
        .as_standard_layout()
        .into_owned()
        .into_raw_vec_and_offset()
        .0;
    state.update(0, p, &g, None, true)
}
