//! Image metrics, parameter error, the dark-channel baseline and the
//! comparison harnesses.

mod dcp;
mod metrics;
mod report;

pub use dcp::{dcp_dehaze, DcpParams};
pub use metrics::{param_error, psnr, ssim, ParamError, PSNR_CAP, PSNR_MSE_FLOOR};
pub use report::{
    ablation_harness, baseline_training_set, beta_sweep, evaluate_state, run_eval, Ablation, AblationEntry,
    BaselineMode, EvalReport, SweepCurves, ViewScore,
};
