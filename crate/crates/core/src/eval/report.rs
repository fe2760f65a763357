use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::VoxelGrid;
use crate::haze::{quantize, QuantizedImage};
use crate::io;
use crate::scalar::Real;
use crate::synth::{load_training_set, FixtureSpec, GroundTruthViews, HazyDataset, SceneSpec};
use crate::trainer::{render_novel_view, train, Objective, TrainConfig, TrainOutput, TrainState, Trainer};

use super::dcp::{dcp_dehaze, DcpParams};
use super::metrics::{param_error, psnr, ssim};

/// How the evaluated field is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    /// Joint dehazing pipeline.
    Ours,
    /// Squared-error fit of the hazy images.
    Naive,
    /// Dark-channel-prior dehazing of every training image, then a
    /// squared-error fit.
    Dcp,
}

impl BaselineMode {
    pub const ALL: [BaselineMode; 3] = [BaselineMode::Ours, BaselineMode::Naive, BaselineMode::Dcp];

    pub fn name(self) -> &'static str {
        match self {
            BaselineMode::Ours => "ours",
            BaselineMode::Naive => "naive",
            BaselineMode::Dcp => "dcp",
        }
    }

    pub fn objective(self) -> Objective {
        match self {
            BaselineMode::Ours => Objective::Dehaze,
            BaselineMode::Naive | BaselineMode::Dcp => Objective::Photometric,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewScore {
    pub name: String,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: String,
    pub per_view: Vec<ViewScore>,
    pub psnr_mean: f64,
    pub ssim_mean: f64,
    /// Hazy held-out input against its clean ground truth.
    pub hazy_psnr_mean: f64,
    /// Atmosphere estimates exist only for the joint pipeline.
    pub beta_hat: Option<f64>,
    pub a_hat: Option<f64>,
    pub rel_beta: Option<f64>,
    pub rel_a: Option<f64>,
    pub avg_rel_err: Option<f64>,
}

/// Scores a trained state on the held-out views.
pub fn evaluate_state<T: Real>(
    mode: BaselineMode,
    state: &TrainState<T>,
    n_samples: usize,
    gt: &GroundTruthViews,
) -> Result<EvalReport> {
    if gt.test_cameras.is_empty() {
        return Err(Error::invalid("dataset has no held-out views"));
    }
    let per_view = score_views(&state.grid, n_samples, gt)?;
    let n = per_view.len() as f64;
    let hazy_psnr_mean = gt
        .test_hazy
        .iter()
        .zip(&gt.test_clean)
        .map(|(h, c)| psnr(h, c))
        .sum::<Result<f64>>()?
        / n;
    let mut report = EvalReport {
        mode: mode.name().to_string(),
        psnr_mean: per_view.iter().map(|v| v.psnr).sum::<f64>() / n,
        ssim_mean: per_view.iter().map(|v| v.ssim).sum::<f64>() / n,
        per_view,
        hazy_psnr_mean,
        beta_hat: None,
        a_hat: None,
        rel_beta: None,
        rel_a: None,
        avg_rel_err: None,
    };
    if mode == BaselineMode::Ours {
        let beta_hat = state.beta_mean().to_f64_lossless();
        let a_hat = state.airlight_mean().to_f64_lossless();
        let err = param_error(beta_hat, a_hat, gt.beta, gt.airlight)?;
        report.beta_hat = Some(beta_hat);
        report.a_hat = Some(a_hat);
        report.rel_beta = Some(err.rel_beta);
        report.rel_a = Some(err.rel_a);
        report.avg_rel_err = Some(err.average);
    }
    Ok(report)
}

fn score_views<T: Real>(grid: &VoxelGrid<T>, n_samples: usize, gt: &GroundTruthViews) -> Result<Vec<ViewScore>> {
    gt.test_cameras
        .par_iter()
        .zip(&gt.test_clean)
        .enumerate()
        .map(|(k, (cam, clean))| {
            let (img, _) = render_novel_view(grid, cam, n_samples)?;
            let img = img.cast::<f64>();
            Ok(ViewScore {
                name: format!("test_{k:03}"),
                psnr: psnr(&img, clean)?,
                ssim: ssim(&img, clean)?,
            })
        })
        .collect()
}

/// The training set a baseline fits: DCP mode replaces every observation by
/// its dehazed, re-quantized version.
pub fn baseline_training_set<T: Real>(dataset: &Path, mode: BaselineMode) -> Result<HazyDataset<T>> {
    let mut data = load_training_set::<T>(dataset)?;
    if mode == BaselineMode::Dcp {
        for img in data.images.iter_mut() {
            let dehazed = dcp_dehaze(&img.values.cast::<f64>(), &DcpParams::default())?;
            let q: QuantizedImage<f64> = quantize(&dehazed, img.levels)?;
            *img = QuantizedImage::from_values(q.values.cast::<T>(), img.levels)?;
        }
    }
    Ok(data)
}

/// Trains the given mode from scratch, scores it on the held-out views and,
/// with `out_dir`, writes `report.json` plus the training artifacts there.
pub fn run_eval<T: Real>(
    dataset: &Path,
    mode: BaselineMode,
    config: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<EvalReport> {
    // Fail on a missing ground-truth block before spending time on training.
    let gt = GroundTruthViews::load(dataset)?;
    let data = baseline_training_set::<T>(dataset, mode)?;
    let config = TrainConfig {
        objective: mode.objective(),
        ..config.clone()
    };
    let mut trainer = Trainer::new(&data, config)?;
    train(&mut trainer, out_dir.map(|dir| TrainOutput { dir }))?;
    let report = evaluate_state(mode, trainer.state(), trainer.config().n_samples, &gt)?;
    if let Some(dir) = out_dir {
        io::write_json(&dir.join("report.json"), &report)?;
    }
    Ok(report)
}

/// One loss term switched off (or, for SMRC, replaced by plain squared error).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    Full,
    Smrc,
    Cons,
    Cd,
    Tv,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [Ablation::Full, Ablation::Smrc, Ablation::Cons, Ablation::Cd, Ablation::Tv];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::Smrc => "smrc",
            Ablation::Cons => "cons",
            Ablation::Cd => "cd",
            Ablation::Tv => "tv",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }

    pub fn apply(self, config: &TrainConfig) -> TrainConfig {
        let mut c = config.clone();
        match self {
            Ablation::Full => {}
            Ablation::Smrc => c.loss.rec_kind = crate::losses::RecKind::Mse,
            Ablation::Cons => c.loss.lambda_cons = 0.0,
            Ablation::Cd => c.loss.lambda_cd = 0.0,
            Ablation::Tv => c.loss.lambda_tv = 0.0,
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationEntry {
    pub ablation: Ablation,
    pub report: EvalReport,
}

/// Runs the joint pipeline once per ablation; reports go to
/// `<out_dir>/<name>/report.json` and a summary to `<out_dir>/ablation.json`.
pub fn ablation_harness<T: Real>(
    dataset: &Path,
    config: &TrainConfig,
    ablations: &[Ablation],
    out_dir: Option<&Path>,
) -> Result<Vec<AblationEntry>> {
    let entries = ablations
        .iter()
        .map(|&a| {
            let dir = out_dir.map(|d| d.join(a.name()));
            let report = run_eval::<T>(dataset, BaselineMode::Ours, &a.apply(config), dir.as_deref())?;
            Ok(AblationEntry { ablation: a, report })
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(d) = out_dir {
        io::write_json(&d.join("ablation.json"), &entries)?;
    }
    Ok(entries)
}

/// Mean held-out PSNR per β for the compared modes, ready for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurves {
    pub betas: Vec<f64>,
    pub airlight: f64,
    pub modes: Vec<String>,
    /// `psnr[m][k]`: mode `m` at `betas[k]`.
    pub psnr: Vec<Vec<f64>>,
    pub hazy_psnr: Vec<f64>,
}

/// Builds one dataset per β under `out_dir/beta_<β>/data`, evaluates every
/// mode on it, and writes `sweep.json`.
pub fn beta_sweep<T: Real>(
    scene: &SceneSpec,
    fixture: &FixtureSpec,
    betas: &[f64],
    airlight: f64,
    modes: &[BaselineMode],
    config: &TrainConfig,
    out_dir: &Path,
) -> Result<(SweepCurves, Vec<Vec<EvalReport>>)> {
    let mut curves = SweepCurves {
        betas: betas.to_vec(),
        airlight,
        modes: modes.iter().map(|m| m.name().to_string()).collect(),
        psnr: vec![Vec::new(); modes.len()],
        hazy_psnr: Vec::new(),
    };
    let mut reports = vec![Vec::new(); modes.len()];
    for &beta in betas {
        let run_dir: PathBuf = out_dir.join(format!("beta_{beta:.3}"));
        let data_dir = run_dir.join("data");
        fixture.build(scene, beta, airlight, &data_dir)?;
        let mut hazy = None;
        for (m, &mode) in modes.iter().enumerate() {
            let r = run_eval::<T>(&data_dir, mode, config, Some(&run_dir.join(mode.name())))?;
            curves.psnr[m].push(r.psnr_mean);
            hazy = Some(r.hazy_psnr_mean);
            reports[m].push(r);
        }
        let hazy = match hazy {
            Some(h) => h,
            None => {
                let gt = GroundTruthViews::load(&data_dir)?;
                let n = gt.test_hazy.len().max(1) as f64;
                gt.test_hazy
                    .iter()
                    .zip(&gt.test_clean)
                    .map(|(h, c)| psnr(h, c))
                    .sum::<Result<f64>>()?
                    / n
            }
        };
        curves.hazy_psnr.push(hazy);
    }
    io::write_json(&out_dir.join("sweep.json"), &curves)?;
    Ok((curves, reports))
}
