use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::RngStream;
use crate::model::{LayerSpec, ModelConfig, SparsityMode, TrainConfig};

use super::dataset::{load_csv_splits, load_mnist_idx, synth_centered_blobs, Splits};
use super::io::read_to_string;

/// Where the samples come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSpec {
    /// Directory holding `train-images-idx3-ubyte`, `train-labels-idx1-ubyte`,
    /// `t10k-images-idx3-ubyte` and `t10k-labels-idx1-ubyte`.
    Mnist,
    /// `train_csv`/`test_csv` with `n_features` columns and a label column.
    Csv,
    Synthetic,
}

/// Flat experiment description, read from JSON. Every key except `widths`
/// has a default; schedule constants default to the laptop-scale schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub data_dir: PathBuf,
    pub train_csv: PathBuf,
    pub test_csv: PathBuf,
    /// Use only the first N training / test samples (0 keeps all).
    pub train_limit: usize,
    pub test_limit: usize,
    pub synthetic_side: usize,
    pub synthetic_classes: usize,
    pub synthetic_train: usize,
    pub synthetic_test: usize,

    /// Input width followed by every layer's width.
    pub widths: Vec<usize>,
    /// One fan-in for all layers, or one per layer.
    pub fanin: Vec<usize>,
    pub bits: u32,
    /// Bit width of the network inputs; defaults to `bits`.
    pub input_bits: Option<u32>,
    pub degree: u32,
    /// Fan-in at the start of mask derivation; unset starts dense.
    pub initial_fanin: Option<usize>,
    pub mode: SparsityMode,
    /// Modes run by `report`; defaults to `[mode]`.
    pub modes: Vec<SparsityMode>,
    pub seed: u64,
    /// Number of consecutive seeds starting at `seed`.
    pub seeds: usize,
    pub mask_epochs: usize,
    pub phase_boundary_epochs: usize,
    pub retrain_epochs: usize,
    pub batch_size: usize,
    pub theta_lr: f64,
    pub mask_lr: f64,
    pub retrain_lr: f64,
    pub weight_decay: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub noise_std: f64,
    pub reg_coeff: f64,
    pub compile_rtl: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let t = TrainConfig::desk();
        Self {
            dataset: DatasetSpec::Synthetic,
            data_dir: PathBuf::from("data/mnist"),
            train_csv: PathBuf::new(),
            test_csv: PathBuf::new(),
            train_limit: 0,
            test_limit: 0,
            synthetic_side: 16,
            synthetic_classes: 2,
            synthetic_train: 1000,
            synthetic_test: 500,
            widths: Vec::new(),
            fanin: vec![6],
            bits: 2,
            input_bits: None,
            degree: 1,
            initial_fanin: None,
            mode: SparsityMode::Sparselut,
            modes: Vec::new(),
            seed: 0,
            seeds: 1,
            mask_epochs: t.mask_epochs,
            phase_boundary_epochs: t.phase_boundary_epochs,
            retrain_epochs: t.retrain_epochs,
            batch_size: t.batch_size,
            theta_lr: t.theta_lr,
            mask_lr: t.mask_lr,
            retrain_lr: t.retrain_lr,
            weight_decay: t.weight_decay,
            eps1: t.eps1,
            eps2: t.eps2,
            noise_std: t.noise_std,
            reg_coeff: t.reg_coeff,
            compile_rtl: false,
        }
    }
}

impl ExperimentConfig {
    /// Reads a JSON config; relative data paths resolve against the config's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.data_dir, &mut cfg.train_csv, &mut cfg.test_csv] {
            if !p.as_os_str().is_empty() && p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data")
    }

    /// MNIST, widths {784, 256, 100, 100, 100, 10}, β = 2, F = 6, D = 1.
    pub fn mnist_desk() -> Self {
        Self {
            dataset: DatasetSpec::Mnist,
            widths: vec![784, 256, 100, 100, 100, 10],
            fanin: vec![6],
            bits: 2,
            degree: 1,
            ..Self::default()
        }
    }

    /// As [`ExperimentConfig::mnist_desk`] with the full 300-epoch schedule.
    pub fn mnist_full() -> Self {
        let t = TrainConfig::full();
        Self {
            mask_epochs: t.mask_epochs,
            phase_boundary_epochs: t.phase_boundary_epochs,
            retrain_epochs: t.retrain_epochs,
            ..Self::mnist_desk()
        }
    }

    pub fn modes(&self) -> Vec<SparsityMode> {
        if self.modes.is_empty() {
            vec![self.mode]
        } else {
            self.modes.clone()
        }
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds.max(1) as u64).map(|k| self.seed + k).collect()
    }

    pub fn model_config(&self, mode: SparsityMode, seed: u64) -> Result<ModelConfig> {
        if self.widths.len() < 2 {
            return Err(Error::invalid_arg("'widths' needs the input width and at least one layer"));
        }
        let n_layers = self.widths.len() - 1;
        let fanin_of = |l: usize| -> Result<usize> {
            match self.fanin.len() {
                1 => Ok(self.fanin[0]),
                n if n == n_layers => Ok(self.fanin[l]),
                n => Err(Error::invalid_arg(format!(
                    "'fanin' has {n} entries, expected 1 or {n_layers}"
                ))),
            }
        };
        let mut layers = Vec::with_capacity(n_layers);
        for (l, w) in self.widths.windows(2).enumerate() {
            let fanin = if mode == SparsityMode::Dense { w[0] } else { fanin_of(l)? };
            layers.push(LayerSpec {
                n_in: w[0],
                n_out: w[1],
                fanin,
                bits: self.bits,
                degree: self.degree,
                initial_fanin: self.initial_fanin.map(|f| f.min(w[0]).max(fanin)),
            });
        }
        let cfg = ModelConfig {
            layers,
            input_bits: self.input_bits.unwrap_or(self.bits),
            mode,
            train: TrainConfig {
                mask_epochs: self.mask_epochs,
                phase_boundary_epochs: self.phase_boundary_epochs,
                retrain_epochs: self.retrain_epochs,
                batch_size: self.batch_size,
                theta_lr: self.theta_lr,
                mask_lr: self.mask_lr,
                retrain_lr: self.retrain_lr,
                weight_decay: self.weight_decay,
                eps1: self.eps1,
                eps2: self.eps2,
                noise_std: self.noise_std,
                reg_coeff: self.reg_coeff,
            },
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every mode's model configuration without touching any data.
    pub fn validate(&self) -> Result<()> {
        for mode in self.modes() {
            self.model_config(mode, self.seed)?;
        }
        match self.dataset {
            DatasetSpec::Csv if self.train_csv.as_os_str().is_empty() || self.test_csv.as_os_str().is_empty() => {
                Err(Error::invalid_arg("csv datasets need 'train_csv' and 'test_csv'"))
            }
            DatasetSpec::Synthetic if self.widths[0] != self.synthetic_side * self.synthetic_side => {
                Err(Error::invalid_arg(format!(
                    "synthetic images have {} pixels but widths[0] is {}",
                    self.synthetic_side * self.synthetic_side,
                    self.widths[0]
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn load_data(&self) -> Result<Splits> {
        let n_features = self.widths[0];
        let n_classes = *self.widths.last().expect("validated");
        let splits = match self.dataset {
            DatasetSpec::Mnist => Splits {
                train: load_mnist_idx(
                    &self.data_dir.join("train-images-idx3-ubyte"),
                    &self.data_dir.join("train-labels-idx1-ubyte"),
                )?,
                test: load_mnist_idx(
                    &self.data_dir.join("t10k-images-idx3-ubyte"),
                    &self.data_dir.join("t10k-labels-idx1-ubyte"),
                )?,
            },
            DatasetSpec::Csv => load_csv_splits(&self.train_csv, &self.test_csv, n_features, n_classes)?,
            DatasetSpec::Synthetic => {
                // Data seed is fixed so that every model seed sees the same data.
                let mut rng = RngStream::new(0x5eed_da7a);
                let all = synth_centered_blobs(
                    self.synthetic_train + self.synthetic_test,
                    self.synthetic_side,
                    self.synthetic_classes,
                    &mut rng,
                )?;
                let idx: Vec<usize> = (0..all.len()).collect();
                Splits {
                    train: all.select(&idx[..self.synthetic_train]),
                    test: all.select(&idx[self.synthetic_train..]),
                }
            }
        };
        let cap = |d: super::Dataset, n: usize| if n == 0 { d } else { d.head(n) };
        let splits = Splits {
            train: cap(splits.train, self.train_limit),
            test: cap(splits.test, self.test_limit),
        };
        if splits.train.n_features() != n_features {
            return Err(Error::invalid_arg(format!(
                "dataset has {} features but widths[0] is {n_features}",
                splits.train.n_features()
            )));
        }
        Ok(splits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_json_uses_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"widths": [256, 16, 2]}"#).unwrap();
        assert_eq!(cfg.mask_epochs, 40);
        assert_eq!(cfg.phase_boundary_epochs, 32);
        assert_eq!(cfg.eps1, 1e-12);
        assert_eq!(cfg.eps2, 5e-5);
        cfg.validate().unwrap();
    }

    #[test]
    fn fanin_above_inputs_fails_validation() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"widths": [256, 4, 2], "fanin": [6]}"#).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn unknown_key_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"widths": [256, 16, 2], "epochz": 3}"#).unwrap();
        assert!(matches!(ExperimentConfig::load(&p), Err(Error::Format(_))));
    }

    #[test]
    fn full_schedule_constants() {
        let c = ExperimentConfig::mnist_full();
        assert_eq!((c.mask_epochs, c.phase_boundary_epochs), (300, 240));
        let m = c.model_config(SparsityMode::Sparselut, 0).unwrap();
        assert_eq!(m.layers.len(), 5);
        assert!(m.layers.iter().all(|l| l.fanin == 6 && l.bits == 2));
    }

    #[test]
    fn per_layer_fanin() {
        let c = ExperimentConfig {
            widths: vec![256, 16, 2],
            fanin: vec![3, 2],
            ..ExperimentConfig::default()
        };
        let m = c.model_config(SparsityMode::Random, 0).unwrap();
        assert_eq!((m.layers[0].fanin, m.layers[1].fanin), (3, 2));
        let c = ExperimentConfig { fanin: vec![3, 2, 1], ..c };
        assert!(c.validate().is_err());
    }
}
