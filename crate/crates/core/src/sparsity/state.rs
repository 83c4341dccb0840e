use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{standard_normal_matrix, RngStream};

use super::mask::init_random_mask;

/// Trainable connectivity of one `n_in × n_out` layer.
///
/// Between steps `active[i][j] == (theta[i][j] > 0)`. Signs are drawn once and
/// never change. Inactive magnitudes are `<= 0`: exactly zero after a hard
/// removal, possibly negative after the update that switched them off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectionState {
    pub(super) theta: Array2<f64>,
    pub(super) sign: Array2<i8>,
    pub(super) active: Array2<bool>,
    pub(super) target_fanin: usize,
    pub(super) initial_fanin: usize,
}

/// Unit-scale initialisation: `θ = |W0| ⊙ mask` with `W0 ~ N(0, 1)`.
pub fn init_connection_state(
    n_in: usize,
    n_out: usize,
    fanin_init: usize,
    target_fanin: usize,
    rng: &mut RngStream,
) -> Result<ConnectionState> {
    init_connection_state_scaled(n_in, n_out, fanin_init, target_fanin, 1.0, rng)
}

/// As [`init_connection_state`] with `W0 ~ N(0, scale²)`.
///
/// Draw order is fixed: the `W0` matrix row-major, then the initial mask,
/// then the signs row-major.
pub fn init_connection_state_scaled(
    n_in: usize,
    n_out: usize,
    fanin_init: usize,
    target_fanin: usize,
    scale: f64,
    rng: &mut RngStream,
) -> Result<ConnectionState> {
    if target_fanin == 0 || target_fanin > n_in {
        return Err(Error::invalid_arg(format!(
            "target fan-in {target_fanin} outside 1..={n_in}"
        )));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::invalid_arg(format!("init scale must be positive, got {scale}")));
    }
    let w0 = standard_normal_matrix(n_in, n_out, rng)?;
    let is_con = init_random_mask(n_in, n_out, fanin_init, rng)?.to_dense();
    let sign = Array2::from_shape_simple_fn((n_in, n_out), || if rng.coin() { 1i8 } else { -1 });

    let mut theta = Array2::zeros((n_in, n_out));
    Zip::from(&mut theta)
        .and(&w0)
        .and(&is_con)
        .for_each(|t, &w, &c| *t = if c { w.abs() * scale } else { 0.0 });
    let active = theta.mapv(|t| t > 0.0);

    Ok(ConnectionState {
        theta,
        sign,
        active,
        target_fanin,
        initial_fanin: fanin_init,
    })
}

impl ConnectionState {
    /// Assembles a state from explicit parts; `active` is derived from `theta`.
    pub fn from_parts(theta: Array2<f64>, sign: Array2<i8>, target_fanin: usize) -> Result<Self> {
        if theta.dim() != sign.dim() {
            return Err(Error::invalid_arg("theta and sign shapes differ"));
        }
        if sign.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::invalid_arg("signs must be +1 or -1"));
        }
        let n_in = theta.nrows();
        if target_fanin == 0 || target_fanin > n_in {
            return Err(Error::invalid_arg(format!(
                "target fan-in {target_fanin} outside 1..={n_in}"
            )));
        }
        let active = theta.mapv(|t| t > 0.0);
        let initial_fanin = active.columns().into_iter().map(|c| c.iter().filter(|&&a| a).count()).max().unwrap_or(0);
        Ok(Self {
            theta,
            sign,
            active,
            target_fanin,
            initial_fanin,
        })
    }

    pub fn n_in(&self) -> usize {
        self.theta.nrows()
    }

    pub fn n_out(&self) -> usize {
        self.theta.ncols()
    }

    pub fn theta(&self) -> &Array2<f64> {
        &self.theta
    }

    pub fn sign(&self) -> &Array2<i8> {
        &self.sign
    }

    pub fn active(&self) -> &Array2<bool> {
        &self.active
    }

    pub fn target_fanin(&self) -> usize {
        self.target_fanin
    }

    pub fn initial_fanin(&self) -> usize {
        self.initial_fanin
    }

    pub fn active_count(&self, neuron: usize) -> usize {
        self.active.column(neuron).iter().filter(|&&a| a).count()
    }

    pub fn total_active(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn density(&self) -> f64 {
        self.total_active() as f64 / self.active.len() as f64
    }

    /// Active count minus target fan-in.
    pub fn residual(&self, neuron: usize) -> isize {
        self.active_count(neuron) as isize - self.target_fanin as isize
    }

    /// `W = θ·s` where `θ > 0`, exactly `0.0` elsewhere.
    pub fn effective_weights(&self) -> Array2<f64> {
        let mut w = Array2::zeros(self.theta.dim());
        Zip::from(&mut w)
            .and(&self.theta)
            .and(&self.sign)
            .for_each(|w, &t, &s| {
                if t > 0.0 {
                    *w = t * s as f64;
                }
            });
        w
    }

    /// Chain rule through `W = θ·s`: `∂E/∂θ = s ⊙ ∂E/∂W`.
    pub fn theta_grad(&self, weight_grad: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_shape(weight_grad)?;
        let mut g = weight_grad.clone();
        Zip::from(&mut g)
            .and(&self.sign)
            .for_each(|g, &s| *g *= s as f64);
        Ok(g)
    }

    /// Mutable magnitudes together with the activity mask, for optimizers.
    /// Callers must follow up with [`ConnectionState::deactivate_nonpositive`].
    pub fn theta_mut_with_active(&mut self) -> (&mut Array2<f64>, &Array2<bool>) {
        (&mut self.theta, &self.active)
    }

    /// Marks every active connection with `θ <= 0` inactive and returns how
    /// many were switched off.
    pub fn deactivate_nonpositive(&mut self) -> usize {
        let mut dropped = 0;
        Zip::from(&mut self.active)
            .and(&self.theta)
            .for_each(|a, &t| {
                if *a && t <= 0.0 {
                    *a = false;
                    dropped += 1;
                }
            });
        dropped
    }

    /// `θ ← θ − η·g` on active connections only.
    pub fn descend(&mut self, theta_grad: &Array2<f64>, lr: f64) -> Result<()> {
        self.check_shape(theta_grad)?;
        Zip::from(&mut self.theta)
            .and(&self.active)
            .and(theta_grad)
            .for_each(|t, &a, &g| {
                if a {
                    *t -= lr * g;
                }
            });
        Ok(())
    }

    /// `θ ← θ − η·α + η·v`, `v ~ N(0, G²)` drawn fresh per active connection
    /// in row-major order. No draws are made when `G = 0`.
    pub fn perturb(&mut self, lr: f64, reg_coeff: f64, noise_std: f64, rng: &mut RngStream) {
        let shift = lr * reg_coeff;
        let noisy = noise_std > 0.0;
        Zip::from(&mut self.theta)
            .and(&self.active)
            .for_each(|t, &a| {
                if a {
                    *t -= shift;
                    if noisy {
                        *t += lr * noise_std * rng.normal();
                    }
                }
            });
    }

    /// Activates `k` distinct inactive inputs of `neuron`, chosen uniformly,
    /// with magnitude `eps1`.
    pub fn regrow(&mut self, neuron: usize, k: usize, eps1: f64, rng: &mut RngStream) -> Result<()> {
        self.check_neuron(neuron)?;
        if k == 0 {
            return Ok(());
        }
        let dormant: Vec<usize> = (0..self.n_in())
            .filter(|&i| !self.active[[i, neuron]])
            .collect();
        if k > dormant.len() {
            return Err(Error::invalid_state(format!(
                "neuron {neuron}: cannot regrow {k} of {} dormant connections",
                dormant.len()
            )));
        }
        for pick in rng.sample_distinct(dormant.len(), k) {
            let i = dormant[pick];
            self.theta[[i, neuron]] = eps1;
            self.active[[i, neuron]] = true;
        }
        Ok(())
    }

    /// Subtracts `eps2` from the `k` weakest active connections of `neuron`;
    /// any that reach `θ <= 0` are switched off.
    pub fn penalize(&mut self, neuron: usize, k: usize, eps2: f64) -> Result<()> {
        for i in self.weakest_active(neuron, k)? {
            let t = &mut self.theta[[i, neuron]];
            *t -= eps2;
            if *t <= 0.0 {
                self.active[[i, neuron]] = false;
            }
        }
        Ok(())
    }

    /// Removes the `k` weakest active connections of `neuron` (θ set to 0).
    pub fn hard_deactivate(&mut self, neuron: usize, k: usize) -> Result<()> {
        for i in self.weakest_active(neuron, k)? {
            self.theta[[i, neuron]] = 0.0;
            self.active[[i, neuron]] = false;
        }
        Ok(())
    }

    /// Row indices of the `k` smallest-θ active connections of `neuron`.
    /// Ties go to the lower index.
    fn weakest_active(&self, neuron: usize, k: usize) -> Result<Vec<usize>> {
        self.check_neuron(neuron)?;
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut cands: Vec<(f64, usize)> = (0..self.n_in())
            .filter(|&i| self.active[[i, neuron]])
            .map(|i| (self.theta[[i, neuron]], i))
            .collect();
        if k > cands.len() {
            return Err(Error::invalid_state(format!(
                "neuron {neuron}: asked for {k} of {} active connections",
                cands.len()
            )));
        }
        let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < cands.len() {
            cands.select_nth_unstable_by(k - 1, order);
            cands.truncate(k);
        }
        Ok(cands.into_iter().map(|(_, i)| i).collect())
    }

    fn check_neuron(&self, neuron: usize) -> Result<()> {
        if neuron >= self.n_out() {
            return Err(Error::invalid_arg(format!(
                "neuron {neuron} outside 0..{}",
                self.n_out()
            )));
        }
        Ok(())
    }

    fn check_shape(&self, m: &Array2<f64>) -> Result<()> {
        if m.dim() != self.theta.dim() {
            return Err(Error::invalid_arg(format!(
                "expected {:?} matrix, got {:?}",
                self.theta.dim(),
                m.dim()
            )));
        }
        Ok(())
    }
}
