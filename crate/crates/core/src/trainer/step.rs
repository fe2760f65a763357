use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{render_rays_backward, render_subgrid, GradBuffer, SubgridSpec, VoxelGrid};
use crate::haze::{apply_asm, asm_backward, AtmosphereParams};
use crate::image::Image;
use crate::losses::{self, ConsMean, RecKind};
use crate::scalar::Real;
use crate::synth::HazyDataset;

use super::config::{Objective, TrainConfig};

/// Regular lattice with a uniformly drawn offset in `[0, stride)²`.
pub fn sample_subgrid(height: usize, width: usize, stride: usize, rng: &mut impl Rng) -> Result<SubgridSpec> {
    if stride == 0 || stride > height.min(width) {
        return Err(Error::invalid(format!(
            "stride {stride} out of range for a {width}x{height} image"
        )));
    }
    let ox = rng.gen_range(0..stride);
    let oy = rng.gen_range(0..stride);
    SubgridSpec::lattice(width, height, stride, ox, oy)
}

/// One view's share of a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ViewBatch {
    pub view: usize,
    pub lattice: SubgridSpec,
    pub jitter_seed: Option<u64>,
}

/// Draws `min(views_per_step, n)` distinct views, each with its own lattice
/// offset and jitter seed.
pub fn sample_batch<T: Real>(
    data: &HazyDataset<T>,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ViewBatch>> {
    let n = data.cameras.len();
    let k = config.views_per_step.min(n);
    index::sample(rng, n, k)
        .into_iter()
        .map(|view| {
            let cam = &data.cameras[view];
            let lattice = sample_subgrid(cam.height, cam.width, config.stride, rng)?;
            Ok(ViewBatch {
                view,
                lattice,
                jitter_seed: Some(rng.gen()),
            })
        })
        .collect()
}

/// Batch-mean loss components; `total` is the optimized scalar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown<T> {
    pub rec: T,
    pub cons: T,
    pub cd: T,
    pub tv: T,
    pub total: T,
}

/// Evaluates the step objective on `batch` and accumulates its exact gradient
/// into `grads` (which is zeroed first).
pub fn loss_and_grad<T: Real>(
    grid: &VoxelGrid<T>,
    atmosphere: &AtmosphereParams<T>,
    data: &HazyDataset<T>,
    batch: &[ViewBatch],
    config: &TrainConfig,
    grads: &mut GradBuffer<T>,
) -> Result<LossBreakdown<T>> {
    if batch.is_empty() {
        return Err(Error::invalid("training batch is empty"));
    }
    if atmosphere.len() != data.cameras.len() || grads.d_beta_raw.len() != atmosphere.len() {
        return Err(Error::shape("atmosphere parameters must match the number of views"));
    }
    grads.zero();
    let w = &config.loss;
    let inv_b = T::one() / T::from_usize(batch.len()).unwrap();
    let lambda_cd = T::lit(w.lambda_cd);
    let lambda_tv = T::lit(w.lambda_tv);
    let mut rec_sum = T::zero();
    let mut cd_sum = T::zero();
    let mut tv_sum = T::zero();

    for vb in batch {
        let cam = data
            .cameras
            .get(vb.view)
            .ok_or_else(|| Error::invalid(format!("view {} out of range", vb.view)))?;
        let (render, tapes) = render_subgrid(grid, cam, &vb.lattice, config.n_samples, vb.jitter_seed)?;
        let target = data.images[vb.view].gather(&vb.lattice)?;

        let (d_clean, d_depth) = match config.objective {
            Objective::Photometric => {
                let (rec, d) = losses::mse_loss(&target.values, &render.color)?;
                rec_sum += rec;
                (d.map(|p| p.map(|v| v * inv_b)), None)
            }
            Objective::Dehaze => {
                let i = vb.view;
                let (beta, airlight) = (atmosphere.beta(i), atmosphere.airlight(i));
                let hazy = apply_asm(&render.color, &render.depth, beta, airlight)?;
                let (rec, d_hazy) = match w.rec_kind {
                    RecKind::Smrc => losses::rec_loss(&hazy, &target, T::lit(w.lambda_smrc))?,
                    RecKind::Mse => losses::mse_loss(&target.values, &hazy)?,
                };
                rec_sum += rec;
                let d_hazy = d_hazy.map(|p| p.map(|v| v * inv_b));
                let asm = asm_backward(&render.color, &render.depth, beta, airlight, &d_hazy)?;
                let (d_beta_raw, d_a_raw) = atmosphere.raw_cotangents(i, asm.d_beta, asm.d_airlight);
                grads.d_beta_raw[i] += d_beta_raw;
                grads.d_a_raw[i] += d_a_raw;

                let mut d_clean = asm.d_clean;
                if w.lambda_cd > 0.0 {
                    let (cd, d_cd) = losses::cd_loss(&target.values, &render.color, w.pool_size)?;
                    if !(w.cd_hinge && cd < T::zero()) {
                        cd_sum += cd;
                        add_scaled(&mut d_clean, &d_cd, lambda_cd * inv_b);
                    }
                }
                if w.lambda_tv > 0.0 {
                    let (tv, d_tv) = losses::tv_loss(&render.color, T::lit(w.tv_eps))?;
                    tv_sum += tv;
                    add_scaled(&mut d_clean, &d_tv, lambda_tv * inv_b);
                }
                (d_clean, Some(asm.d_depth))
            }
        };

        let cotangents: Vec<_> = (0..tapes.len())
            .map(|k| {
                let dd = d_depth.as_ref().map_or(T::zero(), |m| m.pixels()[k][0]);
                (d_clean.pixels()[k], dd, T::zero())
            })
            .collect();
        render_rays_backward(grid, &tapes, &cotangents, grads)?;
    }

    let mut cons_value = T::zero();
    if config.objective == Objective::Dehaze && w.lambda_cons > 0.0 {
        let betas = atmosphere.betas();
        let airlights = atmosphere.airlights();
        let lambda = T::lit(w.lambda_cons);
        let views: Vec<usize> = batch.iter().map(|vb| vb.view).collect();
        let (cons, targets): (_, Vec<usize>) = match w.cons_mean {
            ConsMean::Batch => {
                let b: Vec<T> = views.iter().map(|&i| betas[i]).collect();
                let a: Vec<T> = views.iter().map(|&i| airlights[i]).collect();
                (losses::cons_loss(&b, &a)?, views.clone())
            }
            ConsMean::Dataset => (
                losses::cons_loss_dataset_mean(&betas, &airlights, &views)?,
                (0..betas.len()).collect(),
            ),
        };
        cons_value = cons.value;
        for (k, &i) in targets.iter().enumerate() {
            let (db, da) = atmosphere.raw_cotangents(i, lambda * cons.d_beta[k], lambda * cons.d_airlight[k]);
            grads.d_beta_raw[i] += db;
            grads.d_a_raw[i] += da;
        }
    }

    let rec = rec_sum * inv_b;
    let cd = cd_sum * inv_b;
    let tv = tv_sum * inv_b;
    let total = losses::total_loss(rec, cons_value, cd, tv, w)?;
    Ok(LossBreakdown {
        rec,
        cons: cons_value,
        cd,
        tv,
        total,
    })
}

fn add_scaled<T: Real>(acc: &mut Image<T>, g: &Image<T>, s: T) {
    for (a, b) in acc.pixels_mut().iter_mut().zip(g.pixels()) {
        for c in 0..3 {
            a[c] += s * b[c];
        }
    }
}
