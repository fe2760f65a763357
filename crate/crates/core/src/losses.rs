//! Reconstruction, consistency, contrast, smoothness and photometric losses,
//! each returning its value together with the exact derivative.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::haze::QuantizedImage;
use crate::image::Image;
use crate::scalar::Real;

/// How the reconstruction term compares re-hazed and observed pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecKind {
    /// Soft-margin penalty with the quantization interval.
    Smrc,
    /// Plain squared error against the stored value.
    Mse,
}

/// Which images the consistency means average over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsMean {
    /// Means over the images of the current step.
    Batch,
    /// Means over every training image's current estimate.
    Dataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    /// Inside-interval coefficient of the soft-margin penalty, in (0, 1].
    pub lambda_smrc: f64,
    pub lambda_cons: f64,
    pub lambda_cd: f64,
    pub lambda_tv: f64,
    pub pool_size: usize,
    pub tv_eps: f64,
    /// Clamp the contrast term below at zero.
    pub cd_hinge: bool,
    pub rec_kind: RecKind,
    pub cons_mean: ConsMean,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_smrc: 0.1,
            lambda_cons: 0.1,
            lambda_cd: 0.05,
            lambda_tv: 0.003,
            pool_size: 4,
            tv_eps: 1e-3,
            cd_hinge: false,
            rec_kind: RecKind::Smrc,
            cons_mean: ConsMean::Batch,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_smrc > 0.0 && self.lambda_smrc <= 1.0) {
            return Err(Error::invalid("lambda_smrc must lie in (0, 1]"));
        }
        if [self.lambda_cons, self.lambda_cd, self.lambda_tv]
            .iter()
            .any(|&l| !(l >= 0.0 && l.is_finite()))
        {
            return Err(Error::invalid("loss weights must be non-negative"));
        }
        if self.pool_size == 0 {
            return Err(Error::invalid("pool_size must be positive"));
        }
        if !(self.tv_eps > 0.0) {
            return Err(Error::invalid("tv_eps must be positive"));
        }
        Ok(())
    }
}

/// Soft-margin penalty of prediction `u` against stored value `q` with
/// reconstruction interval `[lo, hi]`. Returns `(value, d/du)`.
#[inline]
pub fn smrc_penalty<T: Real>(u: T, q: T, lo: T, hi: T, lambda: T) -> (T, T) {
    let two = T::lit(2.0);
    if u < lo {
        let r = u - lo;
        (r * r, two * r)
    } else if u > hi {
        let r = u - hi;
        (r * r, two * r)
    } else {
        let r = u - q;
        (lambda * r * r, two * lambda * r)
    }
}

/// Mean soft-margin penalty over all pixels and channels.
pub fn rec_loss<T: Real>(pred: &Image<T>, target: &QuantizedImage<T>, lambda: T) -> Result<(T, Image<T>)> {
    pred.check_shape(&target.values, "rec_loss")?;
    let n = T::from_usize(pred.len() * 3).unwrap();
    let mut total = T::zero();
    let mut grad = Vec::with_capacity(pred.len());
    for (((u, q), lo), hi) in pred
        .pixels()
        .iter()
        .zip(target.values.pixels())
        .zip(target.lo.pixels())
        .zip(target.hi.pixels())
    {
        let mut g = [T::zero(); 3];
        for c in 0..3 {
            let (v, d) = smrc_penalty(u[c], q[c], lo[c], hi[c], lambda);
            total += v;
            g[c] = d / n;
        }
        grad.push(g);
    }
    Ok((total / n, Image::from_pixels(pred.width(), pred.height(), grad)?))
}

/// Mean squared error over all pixels and channels, differentiated with
/// respect to `rendered`.
pub fn mse_loss<T: Real>(observed: &Image<T>, rendered: &Image<T>) -> Result<(T, Image<T>)> {
    observed.check_shape(rendered, "mse_loss")?;
    let n = T::from_usize(observed.len() * 3).unwrap();
    let two = T::lit(2.0);
    let mut total = T::zero();
    let grad = observed
        .pixels()
        .iter()
        .zip(rendered.pixels())
        .map(|(c, ch)| {
            [0, 1, 2].map(|k| {
                let r = ch[k] - c[k];
                total += r * r;
                two * r / n
            })
        })
        .collect();
    Ok((total / n, Image::from_pixels(observed.width(), observed.height(), grad)?))
}

/// Variance penalty `(1/N) Σ (β_i − β̄)² + (A_i − Ā)²` with its derivatives
/// with respect to every `β_i` and `A_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsLoss<T> {
    pub value: T,
    pub d_beta: Vec<T>,
    pub d_airlight: Vec<T>,
}

pub fn cons_loss<T: Real>(betas: &[T], airlights: &[T]) -> Result<ConsLoss<T>> {
    if betas.is_empty() || betas.len() != airlights.len() {
        return Err(Error::invalid("consistency loss needs N >= 1 matching (beta, A) pairs"));
    }
    let n = T::from_usize(betas.len()).unwrap();
    let mean = |v: &[T]| v.iter().copied().sum::<T>() / n;
    let (mb, ma) = (mean(betas), mean(airlights));
    let two = T::lit(2.0);
    let mut value = T::zero();
    for (&b, &a) in betas.iter().zip(airlights) {
        value += (b - mb) * (b - mb) + (a - ma) * (a - ma);
    }
    // The mean's own dependence cancels because the deviations sum to zero.
    Ok(ConsLoss {
        value: value / n,
        d_beta: betas.iter().map(|&b| two * (b - mb) / n).collect(),
        d_airlight: airlights.iter().map(|&a| two * (a - ma) / n).collect(),
    })
}

/// Consistency loss over `batch` indices with means taken over all images.
/// Derivatives are returned for every image.
pub fn cons_loss_dataset_mean<T: Real>(betas: &[T], airlights: &[T], batch: &[usize]) -> Result<ConsLoss<T>> {
    if batch.is_empty() || betas.len() != airlights.len() || batch.iter().any(|&i| i >= betas.len()) {
        return Err(Error::invalid("consistency loss needs N >= 1 valid image indices"));
    }
    let m = T::from_usize(betas.len()).unwrap();
    let n = T::from_usize(batch.len()).unwrap();
    let two = T::lit(2.0);
    let spread = |vals: &[T]| {
        let mean = vals.iter().copied().sum::<T>() / m;
        let mut value = T::zero();
        let mut dev_sum = T::zero();
        let mut grad = vec![T::zero(); vals.len()];
        for &i in batch {
            let r = vals[i] - mean;
            value += r * r;
            dev_sum += r;
            grad[i] += two * r / n;
        }
        for g in grad.iter_mut() {
            *g -= two * dev_sum / (n * m);
        }
        (value, grad)
    };
    let (vb, d_beta) = spread(betas);
    let (va, d_airlight) = spread(airlights);
    let value = vb + va;
    Ok(ConsLoss {
        value: value / n,
        d_beta,
        d_airlight,
    })
}

/// Range of source rows/cols averaged by pool cell `cell`; the last partial
/// cell is padded by replicating the edge pixel.
#[inline]
fn pool_span(cell: usize, s: usize, len: usize) -> impl Iterator<Item = usize> {
    (cell * s..cell * s + s).map(move |i| i.min(len - 1))
}

/// Root-mean-square residual between an image and its `s × s` mean-pooled,
/// nearest-upsampled copy.
pub fn local_contrast<T: Real, const C: usize>(image: &Image<T, C>, s: usize) -> Result<(T, Image<T, C>)> {
    let (w, h) = (image.width(), image.height());
    if s == 0 || w < s || h < s {
        return Err(Error::invalid(format!("{w}x{h} image is smaller than one {s}x{s} pool cell")));
    }
    let (cw, ch) = (w.div_ceil(s), h.div_ceil(s));
    let inv_area = T::one() / T::from_usize(s * s).unwrap();
    let mut means = vec![[T::zero(); C]; cw * ch];
    for cy in 0..ch {
        for cx in 0..cw {
            let m = &mut means[cy * cw + cx];
            for y in pool_span(cy, s, h) {
                for x in pool_span(cx, s, w) {
                    let p = image.get(x, y);
                    for c in 0..C {
                        m[c] += p[c];
                    }
                }
            }
            for v in m.iter_mut() {
                *v *= inv_area;
            }
        }
    }
    let residual = Image::from_fn(w, h, |x, y| {
        let p = image.get(x, y);
        let m = means[(y / s) * cw + x / s];
        std::array::from_fn(|c| p[c] - m[c])
    });
    let n = T::from_usize(w * h * C).unwrap();
    let value = (residual.values().map(|r| r * r).sum::<T>() / n).sqrt();
    if value == T::zero() {
        // Not differentiable at a flat image; zero is a valid subgradient.
        return Ok((value, Image::zeros(w, h)));
    }
    // Per cell, the sum of residuals weighted by each pixel's replication count
    // is folded back through the mean.
    let mut cell_res = vec![[T::zero(); C]; cw * ch];
    for y in 0..h {
        for x in 0..w {
            let r = residual.get(x, y);
            let acc = &mut cell_res[(y / s) * cw + x / s];
            for c in 0..C {
                acc[c] += r[c];
            }
        }
    }
    let mut grad = residual.clone();
    for cy in 0..ch {
        for cx in 0..cw {
            let rsum = cell_res[cy * cw + cx];
            for y in pool_span(cy, s, h) {
                for x in pool_span(cx, s, w) {
                    let mut g = grad.get(x, y);
                    for c in 0..C {
                        g[c] -= rsum[c] * inv_area;
                    }
                    grad.set(x, y, g);
                }
            }
        }
    }
    let scale = T::one() / (n * value);
    Ok((value, grad.map(|p| p.map(|v| v * scale))))
}

/// `Lc(hazy) − Lc(estimate)`; the derivative flows only into `estimate`.
pub fn cd_loss<T: Real>(hazy: &Image<T>, estimate: &Image<T>, s: usize) -> Result<(T, Image<T>)> {
    hazy.check_shape(estimate, "cd_loss")?;
    let (lh, _) = local_contrast(hazy, s)?;
    let (lj, dj) = local_contrast(estimate, s)?;
    Ok((lh - lj, dj.map(|p| p.map(|v| -v))))
}

/// Smoothed total variation: mean over pixels with both forward neighbours of
/// `sqrt(u_x² + u_y² + eps²)`, averaged over channels.
pub fn tv_loss<T: Real, const C: usize>(image: &Image<T, C>, eps: T) -> Result<(T, Image<T, C>)> {
    let (w, h) = (image.width(), image.height());
    if w < 2 || h < 2 {
        return Err(Error::invalid("total variation needs at least a 2x2 lattice"));
    }
    let n = T::from_usize((w - 1) * (h - 1) * C).unwrap();
    let eps2 = eps * eps;
    let mut value = T::zero();
    let mut grad = Image::<T, C>::zeros(w, h);
    for y in 0..h - 1 {
        for x in 0..w - 1 {
            let p = image.get(x, y);
            let px = image.get(x + 1, y);
            let py = image.get(x, y + 1);
            let mut g0 = grad.get(x, y);
            let mut gx = grad.get(x + 1, y);
            let mut gy = grad.get(x, y + 1);
            for c in 0..C {
                let ux = px[c] - p[c];
                let uy = py[c] - p[c];
                let m = (ux * ux + uy * uy + eps2).sqrt();
                value += m;
                gx[c] += ux / (m * n);
                gy[c] += uy / (m * n);
                g0[c] -= (ux + uy) / (m * n);
            }
            grad.set(x, y, g0);
            grad.set(x + 1, y, gx);
            grad.set(x, y + 1, gy);
        }
    }
    Ok((value / n, grad))
}

/// `rec + λ1·cons + λ2·cd + λ3·tv`; any non-finite component is divergence.
pub fn total_loss<T: Real>(rec: T, cons: T, cd: T, tv: T, weights: &LossWeights) -> Result<T> {
    if ![rec, cons, cd, tv].iter().all(|v| v.is_finite()) {
        return Err(Error::Diverged(format!(
            "non-finite loss component (rec {rec}, cons {cons}, cd {cd}, tv {tv})"
        )));
    }
    Ok(rec
        + T::lit(weights.lambda_cons) * cons
        + T::lit(weights.lambda_cd) * cd
        + T::lit(weights.lambda_tv) * tv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smrc_branches() {
        let (lo, q, hi) = (0.5f64, 0.502, 0.504);
        assert_eq!(smrc_penalty::<f64>(q, q, lo, hi, 0.1).0, 0.0);
        let (v, d) = smrc_penalty(lo - 0.1, q, lo, hi, 0.1);
        assert!((v - 0.01).abs() < 1e-15 && (d + 0.2).abs() < 1e-15);
        let (v, _) = smrc_penalty(q + 0.001, q, lo, hi, 0.1);
        assert!((v - 1e-7).abs() < 1e-18);
        let (v, d) = smrc_penalty(hi + 0.05, q, lo, hi, 0.1);
        assert!((v - 0.0025).abs() < 1e-15 && (d - 0.1).abs() < 1e-15);
    }

    #[test]
    fn cons_examples() {
        assert_eq!(cons_loss::<f64>(&[0.3, 0.3], &[0.8, 0.8]).unwrap().value, 0.0);
        assert!((cons_loss::<f64>(&[0.0, 2.0], &[0.8, 0.8]).unwrap().value - 1.0).abs() < 1e-15);
        assert_eq!(cons_loss(&[0.7], &[1.1]).unwrap().value, 0.0);
        assert!(cons_loss::<f64>(&[], &[]).is_err());
    }

    #[test]
    fn dataset_mean_reduces_to_batch_mean_when_batch_is_everything() {
        let b = [0.1f64, 0.25, 0.4];
        let a = [0.7, 0.9, 0.85];
        let x = cons_loss(&b, &a).unwrap();
        let y = cons_loss_dataset_mean(&b, &a, &[0, 1, 2]).unwrap();
        assert!((x.value - y.value).abs() < 1e-15);
        for i in 0..3 {
            assert!((x.d_beta[i] - y.d_beta[i]).abs() < 1e-15);
            assert!((x.d_airlight[i] - y.d_airlight[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn local_contrast_two_by_two() {
        let img = Image::<f64, 1>::from_pixels(2, 2, vec![[0.0], [1.0], [1.0], [0.0]]).unwrap();
        let (v, _) = local_contrast(&img, 2).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
        let flat = Image::<f64, 3>::filled(8, 8, [0.3, 0.6, 0.1]);
        let (v, g) = local_contrast(&flat, 4).unwrap();
        assert!(v < 1e-15);
        assert!(g.values().all(|x| x.abs() < 1.0));
        let (v, g) = local_contrast(&Image::<f64, 3>::filled(8, 8, [0.5; 3]), 4).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.values().all(|x| x == 0.0));
        assert!(local_contrast(&Image::<f64, 3>::zeros(3, 8), 4).is_err());
    }

    #[test]
    fn cd_sign_convention() {
        let hazy = Image::<f64>::from_fn(8, 8, |x, y| [0.5 + 0.05 * ((x + y) % 2) as f64; 3]);
        assert_eq!(cd_loss(&hazy, &hazy, 4).unwrap().0, 0.0);
        let sharp = Image::from_fn(8, 8, |x, y| [0.2 + 0.6 * ((x + y) % 2) as f64; 3]);
        assert!(cd_loss(&hazy, &sharp, 4).unwrap().0 < 0.0);
        assert!(cd_loss(&hazy, &Image::zeros(4, 8), 4).is_err());
    }

    #[test]
    fn tv_examples() {
        let flat = Image::<f64>::filled(5, 4, [0.2; 3]);
        assert!((tv_loss(&flat, 1e-3).unwrap().0 - 1e-3).abs() < 1e-15);
        let c = 0.07;
        let ramp = Image::<f64>::from_fn(6, 5, |x, _| [c * x as f64; 3]);
        let v = tv_loss(&ramp, 1e-3).unwrap().0;
        assert!((v - (c * c + 1e-6f64).sqrt()).abs() < 1e-12);
        assert!(tv_loss(&Image::<f64>::zeros(1, 4), 1e-3).is_err());
    }

    #[test]
    fn total_and_mse() {
        let w = LossWeights {
            lambda_cons: 0.1,
            lambda_cd: 0.01,
            lambda_tv: 0.003,
            ..Default::default()
        };
        assert_eq!(total_loss::<f64>(0.0, 0.0, 0.0, 0.0, &w).unwrap(), 0.0);
        assert!((total_loss::<f64>(1.0, 2.0, -1.0, 4.0, &w).unwrap() - 1.202).abs() < 1e-12);
        let off = LossWeights {
            lambda_cons: 0.0,
            lambda_cd: 0.0,
            lambda_tv: 0.0,
            ..w.clone()
        };
        assert_eq!(total_loss(0.37, 2.0, -1.0, 4.0, &off).unwrap(), 0.37);
        assert!(matches!(total_loss(f64::NAN, 0.0, 0.0, 0.0, &w), Err(Error::Diverged(_))));

        let a = Image::<f64>::from_fn(3, 3, |x, y| [0.1 * x as f64, 0.1 * y as f64, 0.3]);
        let b = a.map(|p| p.map(|v| v + 0.1));
        let (v, g) = mse_loss(&a, &b).unwrap();
        assert!((v - 0.01).abs() < 1e-12);
        assert!(g.values().all(|d| (d - 2.0 * 0.1 / 27.0).abs() < 1e-12));
        assert_eq!(mse_loss(&a, &a).unwrap().0, 0.0);
    }
}
