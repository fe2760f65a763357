use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Real;

/// Reported when the mean squared error falls below [`PSNR_MSE_FLOOR`].
pub const PSNR_CAP: f64 = 99.0;
pub const PSNR_MSE_FLOOR: f64 = 1e-10;

/// Peak signal-to-noise ratio in dB for unit dynamic range.
pub fn psnr<T: Real>(a: &Image<T>, b: &Image<T>) -> Result<f64> {
    a.check_shape(b, "psnr")?;
    if a.is_empty() {
        return Err(Error::shape("psnr of empty images"));
    }
    let sum: f64 = a
        .values()
        .zip(b.values())
        .map(|(x, y)| {
            let d = x.to_f64_lossless() - y.to_f64_lossless();
            d * d
        })
        .sum();
    let mse = sum / (a.len() * 3) as f64;
    Ok(if mse < PSNR_MSE_FLOOR {
        PSNR_CAP
    } else {
        10.0 * (1.0 / mse).log10()
    })
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut k = [0.0; SSIM_WINDOW];
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - r;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Separable Gaussian filter over the valid region.
fn filter_valid(plane: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w - SSIM_WINDOW + 1, h - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean structural similarity over channels with an 11×11 Gaussian window
/// (σ = 1.5), `K1 = 0.01`, `K2 = 0.03` and unit dynamic range.
pub fn ssim<T: Real>(a: &Image<T>, b: &Image<T>) -> Result<f64> {
    a.check_shape(b, "ssim")?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::invalid(format!("ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {w}x{h}")));
    }
    let k = gaussian_taps();
    let mut total = 0.0;
    for c in 0..3 {
        let pa: Vec<f64> = a.pixels().iter().map(|p| p[c].to_f64_lossless()).collect();
        let pb: Vec<f64> = b.pixels().iter().map(|p| p[c].to_f64_lossless()).collect();
        let prod = |f: fn(f64, f64) -> f64| -> Vec<f64> { pa.iter().zip(&pb).map(|(&x, &y)| f(x, y)).collect() };
        let mu_a = filter_valid(&pa, w, h, &k);
        let mu_b = filter_valid(&pb, w, h, &k);
        let aa = filter_valid(&prod(|x, _| x * x), w, h, &k);
        let bb = filter_valid(&prod(|_, y| y * y), w, h, &k);
        let ab = filter_valid(&prod(|x, y| x * y), w, h, &k);
        let n = mu_a.len();
        let mut sum = 0.0;
        for i in 0..n {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            sum += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
        }
        total += sum / n as f64;
    }
    Ok(total / 3.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamError {
    pub rel_beta: f64,
    pub rel_a: f64,
    /// Unweighted mean of the two relative errors.
    pub average: f64,
}

pub fn param_error(beta_hat: f64, a_hat: f64, beta_gt: f64, a_gt: f64) -> Result<ParamError> {
    if !(beta_gt > 0.0 && a_gt > 0.0) {
        return Err(Error::invalid("ground-truth beta and A must be positive"));
    }
    let rel_beta = (beta_hat - beta_gt).abs() / beta_gt;
    let rel_a = (a_hat - a_gt).abs() / a_gt;
    Ok(ParamError {
        rel_beta,
        rel_a,
        average: 0.5 * (rel_beta + rel_a),
    })
}
