use ndarray::{ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::harness::Dataset;
use crate::math::{AdamWConfig, OptimizerState, RngStream};
use crate::sparsity::{deepr_star_step, extract_mask, init_random_mask, sparselut_step, FeatureMask, LayerMask};

use super::config::{ModelConfig, SparsityMode};
use super::lut_net::{check_mask, LutGrads, Precision, TrainedModel};
use super::theta_net::ThetaNet;

// Stream ids for the per-run random generators.
const STREAM_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_REWIRE: u64 = 3;
const STREAM_RETRAIN_INIT: u64 = 10;
const STREAM_RETRAIN_SHUFFLE: u64 = 11;

pub trait Classifier {
    fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>>;
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

impl Classifier for TrainedModel {
    fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        if x.ncols() != self.n_inputs() {
            return Err(Error::invalid_arg(format!(
                "dataset has {} features, model expects {}",
                x.ncols(),
                self.n_inputs()
            )));
        }
        Ok((0..x.nrows())
            .into_par_iter()
            .map(|i| argmax(&self.forward_sample(&x.row(i).to_vec(), Precision::Quantized)))
            .collect())
    }
}

impl Classifier for ThetaNet {
    fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        let logits = self.logits(x)?;
        Ok(logits.outer_iter().map(|r| argmax(r.as_slice().unwrap())).collect())
    }
}

/// Fraction of samples whose arg-max prediction equals the label.
pub fn evaluate(model: &impl Classifier, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid_arg("cannot evaluate on an empty dataset"));
    }
    let pred = model.predict(data.features.view())?;
    let hits = pred.iter().zip(&data.labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / data.len() as f64)
}

#[derive(Debug, Clone)]
pub struct MaskDerivation {
    pub mask: FeatureMask,
    /// Network-wide connection density at the end of every epoch.
    pub density: Vec<f64>,
    /// Mean training loss of every epoch (empty when nothing is trained).
    pub loss: Vec<f64>,
    /// The trained connection network, for learned modes.
    pub net: Option<ThetaNet>,
}

fn check_data(config: &ModelConfig, data: &Dataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::invalid_arg("training set is empty"));
    }
    if data.n_features() != config.n_inputs() {
        return Err(Error::invalid_arg(format!(
            "dataset has {} features, model expects {}",
            data.n_features(),
            config.n_inputs()
        )));
    }
    if data.num_classes > config.n_classes() {
        return Err(Error::invalid_arg(format!(
            "dataset has {} classes, model has {} outputs",
            data.num_classes,
            config.n_classes()
        )));
    }
    Ok(())
}

/// Step 1: obtain the connectivity for `config.mode`.
///
/// `random` draws masks without looking at the data; `dense` returns the
/// full mask; `deepr_star` and `sparselut` train a full-precision
/// connection network with per-step rewiring and read the mask off `θ > 0`.
pub fn derive_mask(config: &ModelConfig, train: &Dataset) -> Result<MaskDerivation> {
    config.validate()?;
    let root = RngStream::new(config.seed);
    match config.mode {
        SparsityMode::Random => {
            let mut rng = root.fork(STREAM_INIT);
            let layers = config
                .layers
                .iter()
                .map(|s| init_random_mask(s.n_in, s.n_out, s.fanin, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let mask = FeatureMask::new(layers)?;
            let density = vec![mask.density(); config.train.mask_epochs];
            Ok(MaskDerivation { mask, density, loss: Vec::new(), net: None })
        }
        SparsityMode::Dense => {
            let layers = config
                .layers
                .iter()
                .map(|s| LayerMask::dense(s.n_in, s.n_out))
                .collect::<Result<Vec<_>>>()?;
            let mask = FeatureMask::new(layers)?;
            let density = vec![1.0; config.train.mask_epochs];
            Ok(MaskDerivation { mask, density, loss: Vec::new(), net: None })
        }
        SparsityMode::DeeprStar | SparsityMode::Sparselut => learn_mask(config, train, &root),
    }
}

fn learn_mask(config: &ModelConfig, train: &Dataset, root: &RngStream) -> Result<MaskDerivation> {
    check_data(config, train)?;
    let tc = &config.train;
    let mut net = ThetaNet::new(config, &mut root.fork(STREAM_INIT))?;
    let mut shuffle_rng = root.fork(STREAM_SHUFFLE);
    let mut rewire_rng = root.fork(STREAM_REWIRE);

    let n = train.len();
    let steps_per_epoch = n.div_ceil(tc.batch_size);
    let sched = config.schedule(steps_per_epoch)?;

    let mut opt = OptimizerState::new(AdamWConfig {
        lr: tc.mask_lr,
        weight_decay: tc.weight_decay,
        ..AdamWConfig::default()
    });
    let bias_slots: Vec<usize> = net.layers.iter().map(|s| opt.register(s.n_out())).collect();

    let total: usize = net.layers.iter().map(|s| s.theta().len()).sum();
    let mut order: Vec<usize> = (0..n).collect();
    let mut density = Vec::with_capacity(tc.mask_epochs);
    let mut losses = Vec::with_capacity(tc.mask_epochs);
    let mut t = 0usize;
    for epoch in 0..tc.mask_epochs {
        shuffle_rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(tc.batch_size) {
            let x = train.features.select(Axis(0), chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| train.labels[i]).collect();
            let grads = net.loss_and_grads(x.view(), &y)?;
            epoch_loss += grads.loss * chunk.len() as f64;

            opt.begin_step();
            for (l, state) in net.layers.iter_mut().enumerate() {
                opt.update(
                    bias_slots[l],
                    net.biases[l].as_slice_mut().expect("contiguous"),
                    grads.bias[l].as_slice().expect("contiguous"),
                    None,
                    false,
                )?;
                match config.mode {
                    SparsityMode::Sparselut => {
                        sparselut_step(state, &grads.theta[l], &sched, t, &mut rewire_rng)?;
                    }
                    _ => {
                        deepr_star_step(state, &grads.theta[l], &sched, &mut rewire_rng)?;
                    }
                }
            }
            t += 1;
        }
        let active: usize = net.layers.iter().map(|s| s.total_active()).sum();
        density.push(active as f64 / total as f64);
        losses.push(epoch_loss / n as f64);
        log::debug!(
            "{} mask epoch {epoch}: loss {:.4} density {:.4}",
            config.mode,
            losses[epoch],
            density[epoch]
        );
    }

    let layers = net
        .layers
        .iter()
        .enumerate()
        .map(|(l, s)| extract_mask(s).map_err(|e| e.in_stage(format!("layer {l}"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(MaskDerivation {
        mask: FeatureMask::new(layers)?,
        density,
        loss: losses,
        net: Some(net),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub loss: f64,
    pub test_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RetrainOutcome {
    /// Model after the last epoch.
    pub model: TrainedModel,
    pub epochs: Vec<EpochLog>,
}

impl RetrainOutcome {
    /// Best per-epoch monitor accuracy and its epoch index.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.epochs
            .iter()
            .enumerate()
            .filter_map(|(i, e)| e.test_accuracy.map(|a| (i, a)))
            .fold(None, |best, (i, a)| match best {
                Some((_, b)) if b >= a => best,
                _ => Some((i, a)),
            })
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.epochs.last().and_then(|e| e.test_accuracy)
    }
}

/// Step 2: train a freshly initialised quantized network whose connectivity
/// is frozen to `mask`. When `monitor` is given it is evaluated after every
/// epoch.
pub fn retrain(
    config: &ModelConfig,
    mask: &FeatureMask,
    train: &Dataset,
    monitor: Option<&Dataset>,
) -> Result<RetrainOutcome> {
    config.validate()?;
    check_mask(config, mask)?;
    check_data(config, train)?;
    let tc = &config.train;
    let root = RngStream::new(config.seed);
    let mut model = TrainedModel::init(config, mask, &mut root.fork(STREAM_RETRAIN_INIT))?;
    let mut shuffle_rng = root.fork(STREAM_RETRAIN_SHUFFLE);

    let mut opt = OptimizerState::new(AdamWConfig {
        lr: tc.retrain_lr,
        weight_decay: tc.weight_decay,
        ..AdamWConfig::default()
    });
    let slots: Vec<(usize, usize)> = model
        .layers
        .iter()
        .map(|l| (opt.register(l.weights.len()), opt.register(l.bias.len())))
        .collect();

    let n = train.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut grads = LutGrads::zeros_like(&model);
    let mut epochs = Vec::with_capacity(tc.retrain_epochs);
    let mut sample = Vec::with_capacity(train.n_features());
    for epoch in 0..tc.retrain_epochs {
        shuffle_rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(tc.batch_size) {
            grads.scale(0.0);
            for &i in chunk {
                sample.clear();
                sample.extend(train.features.row(i).iter().copied());
                epoch_loss += model.accumulate_grads(&sample, train.labels[i], Precision::Quantized, &mut grads)?;
            }
            grads.scale(1.0 / chunk.len() as f64);
            opt.begin_step();
            for (l, layer) in model.layers.iter_mut().enumerate() {
                let (w_slot, b_slot) = slots[l];
                opt.update(
                    w_slot,
                    layer.weights.as_slice_mut().expect("standard layout"),
                    grads.weights[l].as_slice().expect("standard layout"),
                    None,
                    true,
                )?;
                opt.update(b_slot, &mut layer.bias, &grads.bias[l], None, false)?;
            }
        }
        let test_accuracy = monitor.map(|m| evaluate(&model, m)).transpose()?;
        let log_entry = EpochLog {
            loss: epoch_loss / n as f64,
            test_accuracy,
        };
        log::debug!("{} retrain epoch {epoch}: {:?}", config.mode, log_entry);
        epochs.push(log_entry);
    }
    Ok(RetrainOutcome { model, epochs })
}
