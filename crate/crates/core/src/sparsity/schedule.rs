use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Constants of the rewiring loop, counted in optimizer steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewiringSchedule {
    pub total_steps: usize,
    /// First step of the fine-tuning phase. Steps `t < phase_boundary`
    /// penalise surplus connections, later steps remove them outright.
    pub phase_boundary: usize,
    /// Magnitude given to regrown connections.
    pub eps1: f64,
    /// Per-step penalty on the weakest surplus connections.
    pub eps2: f64,
    pub noise_std: f64,
    pub reg_coeff: f64,
    pub learning_rate: f64,
}

impl RewiringSchedule {
    pub const DEFAULT_EPS1: f64 = 1e-12;
    pub const DEFAULT_EPS2: f64 = 5e-5;
    pub const DEFAULT_NOISE_STD: f64 = 1e-3;
    pub const DEFAULT_REG_COEFF: f64 = 1e-5;

    /// Defaults with the phase boundary at 80% of `total_steps`.
    pub fn with_steps(total_steps: usize, learning_rate: f64) -> Result<Self> {
        let boundary = ((total_steps as f64) * 0.8).round().max(1.0) as usize;
        let s = Self {
            total_steps,
            phase_boundary: boundary.min(total_steps),
            eps1: Self::DEFAULT_EPS1,
            eps2: Self::DEFAULT_EPS2,
            noise_std: Self::DEFAULT_NOISE_STD,
            reg_coeff: Self::DEFAULT_REG_COEFF,
            learning_rate,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.phase_boundary == 0 || self.phase_boundary > self.total_steps {
            return Err(Error::invalid_arg(format!(
                "phase boundary {} must lie in 1..={}",
                self.phase_boundary, self.total_steps
            )));
        }
        if !(self.eps1 > 0.0 && self.eps2 > 0.0) {
            return Err(Error::invalid_arg("eps1 and eps2 must be positive"));
        }
        if !(self.noise_std >= 0.0) || !self.reg_coeff.is_finite() {
            return Err(Error::invalid_arg("noise std must be >= 0 and reg coeff finite"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid_arg("learning rate must be positive"));
        }
        Ok(())
    }

    pub fn in_fine_tuning(&self, step: usize) -> bool {
        step >= self.phase_boundary
    }
}
