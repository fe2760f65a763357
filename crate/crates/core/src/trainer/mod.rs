//! Joint optimization of the voxel field and the per-image atmosphere.

mod checkpoint;
mod config;
mod step;

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{scalar_bits, Checkpoint, MAGIC, VERSION};
pub use config::{Objective, TrainConfig};
pub use step::{loss_and_grad, sample_batch, sample_subgrid, LossBreakdown, ViewBatch};

use crate::error::{Error, Result};
use crate::field::{render_subgrid, Camera, GradBuffer, SubgridSpec, VoxelGrid};
use crate::haze::AtmosphereParams;
use crate::image::{Image, Map};
use crate::optim::{adam_step, AdamState};
use crate::scalar::Real;
use crate::synth::HazyDataset;

/// Everything that evolves during training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<T> {
    pub grid: VoxelGrid<T>,
    pub atmosphere: AtmosphereParams<T>,
    pub grid_adam: AdamState<T>,
    pub atmosphere_adam: AdamState<T>,
    /// Completed steps.
    pub iteration: u64,
    pub rng: ChaCha8Rng,
}

impl<T: Real> TrainState<T> {
    pub fn init(data: &HazyDataset<T>, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let r = config.grid_resolution;
        let grid = VoxelGrid::filled(
            [r; 3],
            data.bbox_min.map(T::lit),
            data.bbox_max.map(T::lit),
            data.background.map(T::lit),
            T::lit(config.init_density_raw),
            [T::zero(); 3],
        )?;
        let n = data.cameras.len();
        Ok(Self {
            grid_adam: AdamState::new(4 * grid.num_voxels()),
            atmosphere_adam: AdamState::new(2 * n),
            atmosphere: AtmosphereParams::uniform(n, config.init_beta, config.init_airlight)?,
            grid,
            iteration: 0,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        })
    }

    pub fn beta_mean(&self) -> T {
        mean(&self.atmosphere.betas())
    }

    pub fn airlight_mean(&self) -> T {
        mean(&self.atmosphere.airlights())
    }
}

fn mean<T: Real>(v: &[T]) -> T {
    v.iter().copied().sum::<T>() / T::from_usize(v.len().max(1)).unwrap()
}

/// Loss components and learning rates of one step; also the metrics record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub iter: u64,
    pub rec: f64,
    pub cons: f64,
    pub cd: f64,
    pub tv: f64,
    pub total: f64,
    pub beta_mean: f64,
    pub a_mean: f64,
    pub lr_grid: f64,
    pub lr_atmo: f64,
}

/// Optimizer loop over a loaded dataset.
pub struct Trainer<'a, T> {
    data: &'a HazyDataset<T>,
    config: TrainConfig,
    state: TrainState<T>,
    grads: GradBuffer<T>,
}

impl<'a, T: Real> Trainer<'a, T> {
    pub fn new(data: &'a HazyDataset<T>, config: TrainConfig) -> Result<Self> {
        let state = TrainState::init(data, &config)?;
        Self::from_state(data, config, state)
    }

    pub fn resume(data: &'a HazyDataset<T>, checkpoint: Checkpoint<T>) -> Result<Self> {
        Self::from_state(data, checkpoint.config, checkpoint.state)
    }

    fn from_state(data: &'a HazyDataset<T>, config: TrainConfig, state: TrainState<T>) -> Result<Self> {
        config.validate()?;
        if data.cameras.is_empty() || data.cameras.len() != data.images.len() {
            return Err(Error::invalid("dataset needs one image per camera"));
        }
        if state.atmosphere.len() != data.cameras.len() {
            return Err(Error::shape(format!(
                "state has {} atmosphere entries for {} views",
                state.atmosphere.len(),
                data.cameras.len()
            )));
        }
        let grads = GradBuffer::for_grid(&state.grid, data.cameras.len());
        Ok(Self {
            data,
            config,
            state,
            grads,
        })
    }

    pub fn state(&self) -> &TrainState<T> {
        &self.state
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn is_done(&self) -> bool {
        self.state.iteration >= self.config.total_iterations
    }

    pub fn checkpoint(&self) -> Checkpoint<T> {
        Checkpoint {
            config_hash: self.config.hash(),
            config: self.config.clone(),
            state: self.state.clone(),
        }
    }

    /// One optimization step with the scheduled learning rates.
    pub fn step(&mut self) -> Result<StepReport> {
        let rates = self
            .config
            .schedule
            .lr_at(self.state.iteration, self.config.total_iterations)?;
        self.step_with_rates(T::lit(rates.grid), T::lit(rates.atmosphere))
    }

    /// One step with explicit learning rates. The state is left untouched
    /// when the loss or any gradient is non-finite.
    pub fn step_with_rates(&mut self, lr_grid: T, lr_atmo: T) -> Result<StepReport> {
        let mut rng = self.state.rng.clone();
        let batch = sample_batch(self.data, &self.config, &mut rng)?;
        let s = &mut self.state;
        let loss = loss_and_grad(&s.grid, &s.atmosphere, self.data, &batch, &self.config, &mut self.grads)
            .map_err(|e| self.diagnose(e))?;
        if !self.grads.all_finite() {
            return Err(self.diagnose(Error::Diverged("non-finite gradient".into())));
        }
        let s = &mut self.state;
        let g = &self.grads;
        adam_step(
            &mut [&mut s.grid.density_raw, s.grid.color_raw.as_flattened_mut()],
            &[&g.d_density_raw, g.d_color_raw.as_flattened()],
            &mut s.grid_adam,
            lr_grid,
        )?;
        if self.config.objective == Objective::Dehaze {
            adam_step(
                &mut [&mut s.atmosphere.beta_raw, &mut s.atmosphere.a_raw],
                &[&g.d_beta_raw, &g.d_a_raw],
                &mut s.atmosphere_adam,
                lr_atmo,
            )?;
        }
        s.rng = rng;
        s.iteration += 1;
        Ok(StepReport {
            iter: s.iteration,
            rec: loss.rec.to_f64_lossless(),
            cons: loss.cons.to_f64_lossless(),
            cd: loss.cd.to_f64_lossless(),
            tv: loss.tv.to_f64_lossless(),
            total: loss.total.to_f64_lossless(),
            beta_mean: s.beta_mean().to_f64_lossless(),
            a_mean: s.airlight_mean().to_f64_lossless(),
            lr_grid: lr_grid.to_f64_lossless(),
            lr_atmo: lr_atmo.to_f64_lossless(),
        })
    }

    fn diagnose(&self, e: Error) -> Error {
        match e {
            Error::Diverged(msg) => Error::Diverged(format!(
                "{msg} at iteration {} (beta mean {}, A mean {}, grid finite: {})",
                self.state.iteration,
                self.state.beta_mean(),
                self.state.airlight_mean(),
                self.state.grid.all_finite()
            )),
            other => other,
        }
    }
}

/// Where [`train`] writes its artifacts.
#[derive(Debug, Clone, Copy)]
pub struct TrainOutput<'p> {
    pub dir: &'p Path,
}

pub const FINAL_CHECKPOINT: &str = "final.hznf";
pub const LAST_GOOD_CHECKPOINT: &str = "last_good.hznf";
pub const METRICS_FILE: &str = "metrics.ndjson";

/// Runs the remaining iterations. With `out`, appends a metrics record every
/// `log_every` steps (and at the last), writes `ckpt_<iter>.hznf` every
/// `checkpoint_every` steps and `final.hznf` at the end. On divergence the
/// last good state goes to `last_good.hznf` before the error is returned.
pub fn train<T: Real>(trainer: &mut Trainer<'_, T>, out: Option<TrainOutput<'_>>) -> Result<Vec<StepReport>> {
    let mut log = match out {
        Some(o) => {
            crate::io::ensure_dir(o.dir)?;
            let path = o.dir.join(METRICS_FILE);
            let file = std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .map_err(|e| Error::io(&path, e))?;
            Some((std::io::BufWriter::new(file), path))
        }
        None => None,
    };
    let mut reports = Vec::new();
    while !trainer.is_done() {
        let report = match trainer.step() {
            Ok(r) => r,
            Err(e) => {
                if let (Some(o), Error::Diverged(_)) = (out, &e) {
                    trainer.checkpoint().save(&o.dir.join(LAST_GOOD_CHECKPOINT))?;
                }
                return Err(e);
            }
        };
        let cfg = trainer.config();
        let last = report.iter == cfg.total_iterations;
        if let Some((w, path)) = log.as_mut() {
            if report.iter % cfg.log_every == 0 || last {
                let line = serde_json::to_string(&report).expect("report serializes");
                writeln!(w, "{line}").map_err(|e| Error::io(path.as_path(), e))?;
            }
        }
        if let Some(o) = out {
            if cfg.checkpoint_every > 0 && report.iter % cfg.checkpoint_every == 0 && !last {
                trainer
                    .checkpoint()
                    .save(&o.dir.join(format!("ckpt_{:06}.hznf", report.iter)))?;
            }
        }
        reports.push(report);
    }
    if let Some((mut w, path)) = log {
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    if let Some(o) = out {
        trainer.checkpoint().save(&o.dir.join(FINAL_CHECKPOINT))?;
    }
    Ok(reports)
}

/// Deterministic full-frame render of the clean field and its expected depth,
/// clamped to [0, 1] (depth is left in scene units).
pub fn render_novel_view<T: Real>(grid: &VoxelGrid<T>, camera: &Camera, n_samples: usize) -> Result<(Image<T>, Map<T>)> {
    camera.validate()?;
    let full = SubgridSpec::full(camera.width, camera.height);
    let (render, _) = render_subgrid(grid, camera, &full, n_samples, None)?;
    Ok((render.color.clamp01(), render.depth))
}
