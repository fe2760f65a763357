use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::DEFAULT_DENSITY_RAW;
use crate::losses::LossWeights;
use crate::optim::LrSchedule;

/// What the rendered field is fitted against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Re-haze the rendered clean image and depth, fit the hazy observation,
    /// and estimate per-image atmosphere parameters.
    Dehaze,
    /// Fit the observed images directly with squared error; the atmosphere
    /// parameters stay at their initial values.
    Photometric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub total_iterations: u64,
    pub n_samples: usize,
    /// Pixel spacing of the per-view training lattice.
    pub stride: usize,
    pub views_per_step: usize,
    pub grid_resolution: usize,
    pub seed: u64,
    /// 0 disables periodic checkpoints.
    pub checkpoint_every: u64,
    pub log_every: u64,
    pub init_beta: f64,
    pub init_airlight: f64,
    pub init_density_raw: f64,
    pub objective: Objective,
    pub loss: LossWeights,
    pub schedule: LrSchedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_iterations: 3000,
            n_samples: 128,
            stride: 4,
            views_per_step: 4,
            grid_resolution: 64,
            seed: 0,
            checkpoint_every: 1000,
            log_every: 100,
            init_beta: 0.05,
            init_airlight: 0.75,
            init_density_raw: DEFAULT_DENSITY_RAW,
            objective: Objective::Dehaze,
            loss: LossWeights::default(),
            schedule: LrSchedule::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_iterations == 0 {
            return Err(Error::invalid("total_iterations must be at least 1"));
        }
        if self.stride == 0 {
            return Err(Error::invalid("stride must be at least 1"));
        }
        if self.views_per_step == 0 {
            return Err(Error::invalid("views_per_step must be at least 1"));
        }
        if self.n_samples < 2 {
            return Err(Error::InsufficientSamples(self.n_samples));
        }
        if self.grid_resolution < 2 {
            return Err(Error::invalid("grid_resolution must be at least 2"));
        }
        if self.log_every == 0 {
            return Err(Error::invalid("log_every must be at least 1"));
        }
        if !self.init_density_raw.is_finite() {
            return Err(Error::invalid("init_density_raw must be finite"));
        }
        if !(self.init_beta > 0.0) {
            return Err(Error::invalid("init_beta must be positive"));
        }
        if !(self.init_airlight > 0.0 && self.init_airlight < crate::haze::A_MAX) {
            return Err(Error::invalid("init_airlight must lie in (0, 1.5)"));
        }
        self.loss.validate()?;
        self.schedule.validate()
    }

    /// SHA-256 of the compact JSON form.
    pub fn hash(&self) -> [u8; 32] {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).into()
    }
}
