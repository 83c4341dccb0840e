use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::QuantizerSpec;
use crate::sparsity::RewiringSchedule;

/// One layer: `n_in → n_out`, each neuron reading `fanin` inputs, emitting a
/// `bits`-wide code, with a degree-`degree` polynomial over its inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub n_in: usize,
    pub n_out: usize,
    pub fanin: usize,
    pub bits: u32,
    #[serde(default = "one")]
    pub degree: u32,
    /// Fan-in at the start of mask derivation; `None` starts dense.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_fanin: Option<usize>,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparsityMode {
    Dense,
    Random,
    DeeprStar,
    Sparselut,
}

impl SparsityMode {
    pub fn name(self) -> &'static str {
        match self {
            SparsityMode::Dense => "dense",
            SparsityMode::Random => "random",
            SparsityMode::DeeprStar => "deepr_star",
            SparsityMode::Sparselut => "sparselut",
        }
    }

    pub fn learns_mask(self) -> bool {
        matches!(self, SparsityMode::DeeprStar | SparsityMode::Sparselut)
    }
}

impl std::str::FromStr for SparsityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "dense" => Ok(SparsityMode::Dense),
            "random" => Ok(SparsityMode::Random),
            "deepr_star" | "deepr*" | "deepr" => Ok(SparsityMode::DeeprStar),
            "sparselut" => Ok(SparsityMode::Sparselut),
            other => Err(Error::invalid_arg(format!("unknown sparsity mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for SparsityMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Epochs of mask derivation.
    pub mask_epochs: usize,
    /// Epoch at which rewiring switches from penalties to hard removal.
    pub phase_boundary_epochs: usize,
    /// Epochs of quantized retraining under the frozen mask.
    pub retrain_epochs: usize,
    pub batch_size: usize,
    /// Step size `η` of the connection update on `θ` during mask derivation.
    pub theta_lr: f64,
    /// AdamW learning rate for the biases during mask derivation.
    pub mask_lr: f64,
    pub retrain_lr: f64,
    pub weight_decay: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub noise_std: f64,
    pub reg_coeff: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl TrainConfig {
    /// Full-length schedule: 300 mask epochs, boundary at 240.
    pub fn full() -> Self {
        Self {
            mask_epochs: 300,
            phase_boundary_epochs: 240,
            retrain_epochs: 300,
            ..Self::desk()
        }
    }

    /// Laptop-scale schedule: 40 mask epochs, boundary at 32, 60 retrain epochs.
    pub fn desk() -> Self {
        Self {
            mask_epochs: 40,
            phase_boundary_epochs: 32,
            retrain_epochs: 60,
            batch_size: 64,
            theta_lr: 0.2,
            mask_lr: 1e-3,
            retrain_lr: 2e-3,
            weight_decay: 1e-4,
            eps1: RewiringSchedule::DEFAULT_EPS1,
            eps2: RewiringSchedule::DEFAULT_EPS2,
            noise_std: RewiringSchedule::DEFAULT_NOISE_STD,
            reg_coeff: RewiringSchedule::DEFAULT_REG_COEFF,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: Vec<LayerSpec>,
    /// Bit width of the network inputs.
    pub input_bits: u32,
    pub mode: SparsityMode,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub seed: u64,
}

impl ModelConfig {
    /// Layers for the given widths (`widths[0]` is the input size), all with
    /// the same fan-in (capped at the layer's input count), bit width and degree.
    pub fn uniform(
        widths: &[usize],
        fanin: usize,
        bits: u32,
        degree: u32,
        mode: SparsityMode,
    ) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::invalid_arg("need an input width and at least one layer"));
        }
        let layers = widths
            .windows(2)
            .map(|w| LayerSpec {
                n_in: w[0],
                n_out: w[1],
                fanin: if mode == SparsityMode::Dense { w[0] } else { fanin.min(w[0]) },
                bits,
                degree,
                initial_fanin: None,
            })
            .collect();
        let cfg = Self {
            layers,
            input_bits: bits,
            mode,
            train: TrainConfig::desk(),
            seed: 0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn n_classes(&self) -> usize {
        self.layers.last().map_or(0, |l| l.n_out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::invalid_arg("model has no layers"));
        }
        QuantizerSpec::unit(self.input_bits)?;
        for (l, spec) in self.layers.iter().enumerate() {
            let ctx = |msg: String| Error::invalid_arg(format!("layer {l}: {msg}"));
            if spec.n_in == 0 || spec.n_out == 0 {
                return Err(ctx("zero-width layer".into()));
            }
            if spec.fanin == 0 || spec.fanin > spec.n_in {
                return Err(ctx(format!("fan-in {} outside 1..={}", spec.fanin, spec.n_in)));
            }
            if let Some(fi) = spec.initial_fanin {
                if fi < spec.fanin || fi > spec.n_in {
                    return Err(ctx(format!(
                        "initial fan-in {fi} outside {}..={}",
                        spec.fanin, spec.n_in
                    )));
                }
            }
            QuantizerSpec::unit(spec.bits).map_err(|e| ctx(e.to_string()))?;
            if !(1..=2).contains(&spec.degree) {
                return Err(ctx(format!("polynomial degree {} not in {{1, 2}}", spec.degree)));
            }
            if self.mode == SparsityMode::Dense && spec.fanin != spec.n_in {
                return Err(ctx("dense mode requires fan-in equal to the input count".into()));
            }
            if l + 1 < self.layers.len() && self.layers[l + 1].n_in != spec.n_out {
                return Err(ctx(format!(
                    "{} outputs do not feed the {} inputs of the next layer",
                    spec.n_out,
                    self.layers[l + 1].n_in
                )));
            }
        }
        let t = &self.train;
        if t.batch_size == 0 {
            return Err(Error::invalid_arg("batch size must be positive"));
        }
        if !(t.theta_lr > 0.0 && t.mask_lr > 0.0 && t.retrain_lr > 0.0) {
            return Err(Error::invalid_arg("learning rates must be positive"));
        }
        if self.mode.learns_mask() {
            if t.mask_epochs == 0 {
                return Err(Error::invalid_arg("mask derivation needs at least one epoch"));
            }
            if t.phase_boundary_epochs == 0 || t.phase_boundary_epochs >= t.mask_epochs {
                return Err(Error::invalid_arg(format!(
                    "phase boundary epoch {} must lie in 1..{}",
                    t.phase_boundary_epochs, t.mask_epochs
                )));
            }
        }
        Ok(())
    }

    /// Rewiring constants for a run with `steps_per_epoch` optimizer steps.
    pub fn schedule(&self, steps_per_epoch: usize) -> Result<RewiringSchedule> {
        let t = &self.train;
        let s = RewiringSchedule {
            total_steps: t.mask_epochs * steps_per_epoch,
            phase_boundary: t.phase_boundary_epochs * steps_per_epoch,
            eps1: t.eps1,
            eps2: t.eps2,
            noise_std: t.noise_std,
            reg_coeff: t.reg_coeff,
            learning_rate: t.theta_lr,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn input_quantizer(&self) -> QuantizerSpec {
        QuantizerSpec::unit(self.input_bits).expect("validated input bits")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_caps_fanin_and_chains() {
        let c = ModelConfig::uniform(&[4, 8, 3], 6, 2, 1, SparsityMode::Random).unwrap();
        assert_eq!(c.layers[0].fanin, 4);
        assert_eq!(c.layers[1].fanin, 6);
        assert_eq!(c.n_classes(), 3);
    }

    #[test]
    fn rejects_fanin_above_inputs() {
        let mut c = ModelConfig::uniform(&[16, 8, 2], 4, 2, 1, SparsityMode::Sparselut).unwrap();
        c.layers[1].fanin = 9;
        assert!(matches!(c.validate(), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn dense_mode_forces_full_fanin() {
        let mut c = ModelConfig::uniform(&[5, 3, 2], 2, 2, 1, SparsityMode::Dense).unwrap();
        assert_eq!(c.layers[0].fanin, 5);
        c.layers[0].fanin = 2;
        assert!(c.validate().is_err());
    }

    #[test]
    fn unsupported_degree() {
        let mut c = ModelConfig::uniform(&[5, 3, 2], 2, 2, 1, SparsityMode::Random).unwrap();
        c.layers[0].degree = 3;
        assert!(c.validate().is_err());
    }

    #[test]
    fn schedule_in_steps() {
        let c = ModelConfig::uniform(&[5, 3, 2], 2, 2, 1, SparsityMode::Sparselut).unwrap();
        let s = c.schedule(10).unwrap();
        assert_eq!((s.total_steps, s.phase_boundary), (400, 320));
    }

    #[test]
    fn mode_names_roundtrip() {
        for m in [SparsityMode::Dense, SparsityMode::Random, SparsityMode::DeeprStar, SparsityMode::Sparselut] {
            assert_eq!(m.name().parse::<SparsityMode>().unwrap(), m);
        }
        assert!("gmp".parse::<SparsityMode>().is_err());
    }
}
