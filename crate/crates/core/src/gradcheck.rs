//! Central finite-difference verification of every analytic gradient on
//! random small float64 instances.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::field::{render_ray, render_ray_backward, Camera, GradBuffer, Ray, SubgridSpec, VoxelGrid};
use crate::haze::{apply_asm, asm_backward, quantize, AtmosphereParams, QuantizedImage};
use crate::image::{Image, Map};
use crate::losses::{self, LossWeights};
use crate::math;
use crate::synth::HazyDataset;
use crate::trainer::{loss_and_grad, TrainConfig, ViewBatch};

/// Tolerance for single components (rendering, ASM, each loss).
pub const COMPONENT_TOL: f64 = 1e-4;
/// Tolerance for the full training objective.
pub const END_TO_END_TOL: f64 = 1e-3;
/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared in absolute terms.
pub const SCALE_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub component: String,
    pub checked: usize,
    pub max_rel_err: f64,
    /// Analytic and numeric values at the worst coordinate.
    pub worst_pair: (f64, f64),
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub seed: u64,
    pub rows: Vec<CheckRow>,
}

impl GradcheckReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    /// Fixed-width text table, one component per line.
    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<28} {:>7} {:>12} {:>9}  result   (analytic, numeric) at worst\n",
            "component", "checked", "max rel err", "tol"
        );
        for r in &self.rows {
            s += &format!(
                "{:<28} {:>7} {:>12.3e} {:>9.0e}  {}     ({:.6e}, {:.6e})\n",
                r.component,
                r.checked,
                r.max_rel_err,
                r.tolerance,
                if r.pass { "pass" } else { "FAIL" },
                r.worst_pair.0,
                r.worst_pair.1
            );
        }
        s
    }
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(SCALE_FLOOR)
}

/// Accumulates the worst relative error of one component.
struct Check {
    name: String,
    tol: f64,
    checked: usize,
    worst: f64,
    worst_pair: (f64, f64),
}

impl Check {
    fn new(name: &str, tol: f64) -> Self {
        Self {
            name: name.to_string(),
            tol,
            checked: 0,
            worst: 0.0,
            worst_pair: (0.0, 0.0),
        }
    }

    /// Compares `analytic` with the central difference of `f` around the
    /// coordinate that `set` writes.
    fn coord(&mut self, analytic: f64, x0: f64, mut set: impl FnMut(f64), mut f: impl FnMut() -> f64) {
        set(x0 + FD_STEP);
        let fp = f();
        set(x0 - FD_STEP);
        let fm = f();
        set(x0);
        let numeric = (fp - fm) / (2.0 * FD_STEP);
        let e = rel_err(analytic, numeric);
        let e = if e.is_nan() { f64::INFINITY } else { e };
        if e >= self.worst {
            self.worst = e;
            self.worst_pair = (analytic, numeric);
        }
        self.checked += 1;
    }

    fn row(self) -> CheckRow {
        CheckRow {
            pass: self.checked > 0 && self.worst <= self.tol,
            component: self.name,
            checked: self.checked,
            max_rel_err: self.worst,
            worst_pair: self.worst_pair,
            tolerance: self.tol,
        }
    }
}

fn random_image(w: usize, h: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Image<f64> {
    Image::from_fn(w, h, |_, _| [0; 3].map(|_| rng.gen_range(lo..hi)))
}

fn random_grid(res: usize, rng: &mut ChaCha8Rng) -> VoxelGrid<f64> {
    let mut g = VoxelGrid::new([res; 3], [-1.0; 3], [1.0; 3], [0.2, 0.3, 0.4]).expect("valid grid");
    for d in g.density_raw.iter_mut() {
        *d = rng.gen_range(-3.0..2.0);
    }
    for c in g.color_raw.iter_mut() {
        *c = [0; 3].map(|_| rng.gen_range(-2.0..2.0));
    }
    g
}

fn random_ray(rng: &mut ChaCha8Rng) -> Ray<f64> {
    let target = [0; 3].map(|_| rng.gen_range(-0.5..0.5));
    let eye = math::scale(math::normalize([0; 3].map(|_| rng.gen_range(-1.0..1.0))), 3.0);
    let dir = math::normalize(math::sub(target, eye));
    Ray::new(eye, dir, 1.0, 5.0).expect("unit direction")
}

/// Up to `k` distinct indices with a nonzero entry.
fn touched(g: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let nz: Vec<usize> = (0..g.len()).filter(|&i| g[i] != 0.0).collect();
    index::sample(rng, nz.len(), k.min(nz.len()))
        .into_iter()
        .map(|i| nz[i])
        .collect()
}

fn check_render(rng: &mut ChaCha8Rng) -> Result<Vec<CheckRow>> {
    let n_samples = 48;
    let mut rows = Vec::new();
    for (name, cot) in [
        ("render color", ([0.7, -0.4, 0.9], 0.0, 0.0)),
        ("render depth", ([0.0; 3], 1.0, 0.0)),
        ("render opacity", ([0.0; 3], 0.0, 1.0)),
    ] {
        let mut check = Check::new(name, COMPONENT_TOL);
        for _ in 0..3 {
            let mut grid = random_grid(6, rng);
            let ray = random_ray(rng);
            let (_, tape) = render_ray(&grid, &ray, n_samples, None)?;
            let mut grads = GradBuffer::for_grid(&grid, 0);
            render_ray_backward(&grid, &tape, cot.0, cot.1, cot.2, &mut grads)?;
            let f = |g: &VoxelGrid<f64>| {
                let (o, _) = render_ray(g, &ray, n_samples, None).expect("render");
                math::dot(cot.0, o.color) + cot.1 * o.depth + cot.2 * o.opacity
            };
            for i in touched(&grads.d_density_raw, 8, rng) {
                let x0 = grid.density_raw[i];
                let cell = std::cell::RefCell::new(&mut grid);
                check.coord(
                    grads.d_density_raw[i],
                    x0,
                    |v| cell.borrow_mut().density_raw[i] = v,
                    || f(&cell.borrow()),
                );
            }
            let flat: Vec<f64> = grads.d_color_raw.as_flattened().to_vec();
            for i in touched(&flat, 8, rng) {
                let x0 = grid.color_raw[i / 3][i % 3];
                let cell = std::cell::RefCell::new(&mut grid);
                check.coord(
                    flat[i],
                    x0,
                    |v| cell.borrow_mut().color_raw[i / 3][i % 3] = v,
                    || f(&cell.borrow()),
                );
            }
        }
        rows.push(check.row());
    }
    Ok(rows)
}

fn check_asm(rng: &mut ChaCha8Rng) -> Result<CheckRow> {
    let mut check = Check::new("asm adjoints", COMPONENT_TOL);
    let (w, h) = (6, 5);
    let clean = random_image(w, h, 0.0, 1.0, rng);
    let depth: Map<f64> = Image::from_fn(w, h, |_, _| [rng.gen_range(1.0..6.0)]);
    let g = random_image(w, h, -1.0, 1.0, rng);
    let beta = rng.gen_range(0.05..0.4);
    let a = rng.gen_range(0.5..1.2);
    let grads = asm_backward(&clean, &depth, beta, a, &g)?;
    let f = |j: &Image<f64>, d: &Map<f64>, b: f64, a: f64| -> f64 {
        let out = apply_asm(j, d, b, a).expect("asm");
        out.values().zip(g.values()).map(|(x, y)| x * y).sum()
    };
    for k in 0..clean.len() {
        let mut j = clean.clone();
        let x0 = j.pixels()[k][1];
        let cell = std::cell::RefCell::new(&mut j);
        check.coord(
            grads.d_clean.pixels()[k][1],
            x0,
            |v| cell.borrow_mut().pixels_mut()[k][1] = v,
            || f(&cell.borrow(), &depth, beta, a),
        );
        let mut d = depth.clone();
        let x0 = d.pixels()[k][0];
        let cell = std::cell::RefCell::new(&mut d);
        check.coord(
            grads.d_depth.pixels()[k][0],
            x0,
            |v| cell.borrow_mut().pixels_mut()[k][0] = v,
            || f(&clean, &cell.borrow(), beta, a),
        );
    }
    let b = std::cell::Cell::new(beta);
    check.coord(grads.d_beta, beta, |v| b.set(v), || f(&clean, &depth, b.get(), a));
    let av = std::cell::Cell::new(a);
    check.coord(grads.d_airlight, a, |v| av.set(v), || f(&clean, &depth, beta, av.get()));
    Ok(check.row())
}

/// Checks `grad` of an image functional against central differences in
/// every coordinate.
fn image_check<const C: usize>(
    check: &mut Check,
    image: &Image<f64, C>,
    grad: &Image<f64, C>,
    f: impl Fn(&Image<f64, C>) -> f64,
) {
    let mut img = image.clone();
    for k in 0..img.len() {
        for c in 0..C {
            let x0 = img.pixels()[k][c];
            let cell = std::cell::RefCell::new(&mut img);
            check.coord(grad.pixels()[k][c], x0, |v| cell.borrow_mut().pixels_mut()[k][c] = v, || f(&cell.borrow()));
        }
    }
}

fn check_losses(rng: &mut ChaCha8Rng) -> Result<Vec<CheckRow>> {
    let (w, h) = (11, 9);
    let mut rows = Vec::new();

    let mut smrc = Check::new("smrc", COMPONENT_TOL);
    // Coarse levels so predictions land inside, below and above intervals.
    let target: QuantizedImage<f64> = quantize(&random_image(w, h, 0.0, 1.0, rng), 5)?;
    let pred = random_image(w, h, -0.1, 1.1, rng);
    let lambda = rng.gen_range(0.05..1.0);
    let (_, g) = losses::rec_loss(&pred, &target, lambda)?;
    image_check(&mut smrc, &pred, &g, |p| losses::rec_loss(p, &target, lambda).unwrap().0);
    rows.push(smrc.row());

    let mut cons = Check::new("cons", COMPONENT_TOL);
    let n = 5;
    let betas: Vec<f64> = (0..n).map(|_| rng.gen_range(0.02..0.4)).collect();
    let airs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.3..1.3)).collect();
    let batch = [3usize, 0, 4];
    let batch_loss = losses::cons_loss(&betas, &airs)?;
    let dataset_loss = losses::cons_loss_dataset_mean(&betas, &airs, &batch)?;
    for i in 0..n {
        for (which, analytic) in [(0, batch_loss.d_beta[i]), (1, batch_loss.d_airlight[i])] {
            let mut v = [betas.clone(), airs.clone()];
            let x0 = v[which][i];
            let cell = std::cell::RefCell::new(&mut v);
            cons.coord(
                analytic,
                x0,
                |x| cell.borrow_mut()[which][i] = x,
                || {
                    let v = cell.borrow();
                    losses::cons_loss(&v[0], &v[1]).unwrap().value
                },
            );
        }
        for (which, analytic) in [(0, dataset_loss.d_beta[i]), (1, dataset_loss.d_airlight[i])] {
            let mut v = [betas.clone(), airs.clone()];
            let x0 = v[which][i];
            let cell = std::cell::RefCell::new(&mut v);
            cons.coord(
                analytic,
                x0,
                |x| cell.borrow_mut()[which][i] = x,
                || {
                    let v = cell.borrow();
                    losses::cons_loss_dataset_mean(&v[0], &v[1], &batch).unwrap().value
                },
            );
        }
    }
    rows.push(cons.row());

    let mut cd = Check::new("cd", COMPONENT_TOL);
    let hazy = random_image(w, h, 0.2, 0.9, rng);
    let est = random_image(w, h, 0.0, 1.0, rng);
    for s in [2, 4] {
        let (_, g) = losses::cd_loss(&hazy, &est, s)?;
        image_check(&mut cd, &est, &g, |e| losses::cd_loss(&hazy, e, s).unwrap().0);
    }
    rows.push(cd.row());

    let mut tv = Check::new("tv", COMPONENT_TOL);
    let img = random_image(w, h, 0.0, 1.0, rng);
    let eps = rng.gen_range(1e-3..1e-1);
    let (_, g) = losses::tv_loss(&img, eps)?;
    image_check(&mut tv, &img, &g, |i| losses::tv_loss(i, eps).unwrap().0);
    rows.push(tv.row());
    Ok(rows)
}

/// Two 16×16 views of a random 8³ grid with random quantized observations.
fn end_to_end_instance(rng: &mut ChaCha8Rng) -> Result<(VoxelGrid<f64>, AtmosphereParams<f64>, HazyDataset<f64>)> {
    let grid = random_grid(8, rng);
    let (w, h) = (16, 16);
    let cameras = (0..2)
        .map(|k| {
            let az = 0.8 + 1.7 * k as f64 + rng.gen_range(-0.2..0.2);
            let eye = [3.0 * az.cos(), 3.0 * az.sin(), rng.gen_range(0.5..1.5)];
            Camera::look_at(eye, [0.0; 3], [0.0, 0.0, 1.0], w, h, 14.0, 1.0, 5.0)
        })
        .collect::<Result<Vec<_>>>()?;
    let images = (0..2)
        .map(|_| quantize(&random_image(w, h, 0.0, 1.0, rng), 256))
        .collect::<Result<Vec<_>>>()?;
    let mut atmo = AtmosphereParams::uniform(2, 0.2, 0.8)?;
    for k in 0..2 {
        atmo.beta_raw[k] += rng.gen_range(-0.5..0.5);
        atmo.a_raw[k] += rng.gen_range(-0.5..0.5);
    }
    let data = HazyDataset {
        cameras,
        images,
        background: [0.2, 0.3, 0.4],
        near: 1.0,
        far: 5.0,
        bbox_min: [-1.0; 3],
        bbox_max: [1.0; 3],
    };
    Ok((grid, atmo, data))
}

fn check_end_to_end(rng: &mut ChaCha8Rng) -> Result<CheckRow> {
    let mut check = Check::new("end-to-end (voxels, beta, A)", END_TO_END_TOL);
    let (mut grid, mut atmo, data) = end_to_end_instance(rng)?;
    let config = TrainConfig {
        n_samples: 32,
        grid_resolution: 8,
        loss: LossWeights {
            lambda_cons: 0.5,
            lambda_cd: 0.3,
            lambda_tv: 0.2,
            ..LossWeights::default()
        },
        ..TrainConfig::default()
    };
    let batch: Vec<ViewBatch> = (0..2)
        .map(|view| {
            Ok(ViewBatch {
                view,
                lattice: SubgridSpec::lattice(16, 16, 2, rng.gen_range(0..2), rng.gen_range(0..2))?,
                jitter_seed: Some(rng.gen()),
            })
        })
        .collect::<Result<_>>()?;
    let mut grads = GradBuffer::for_grid(&grid, 2);
    loss_and_grad(&grid, &atmo, &data, &batch, &config, &mut grads)?;
    let state = std::cell::RefCell::new((&mut grid, &mut atmo));
    let f = || {
        let s = state.borrow();
        let mut scratch = GradBuffer::for_grid(s.0, 2);
        loss_and_grad(s.0, s.1, &data, &batch, &config, &mut scratch)
            .expect("loss")
            .total
    };
    for k in 0..2 {
        let x0 = state.borrow().1.beta_raw[k];
        check.coord(grads.d_beta_raw[k], x0, |v| state.borrow_mut().1.beta_raw[k] = v, f);
        let x0 = state.borrow().1.a_raw[k];
        check.coord(grads.d_a_raw[k], x0, |v| state.borrow_mut().1.a_raw[k] = v, f);
    }
    for i in touched(&grads.d_density_raw, 20, rng) {
        let x0 = state.borrow().0.density_raw[i];
        check.coord(grads.d_density_raw[i], x0, |v| state.borrow_mut().0.density_raw[i] = v, f);
    }
    let flat = grads.d_color_raw.as_flattened().to_vec();
    for i in touched(&flat, 20, rng) {
        let x0 = state.borrow().0.color_raw[i / 3][i % 3];
        check.coord(flat[i], x0, |v| state.borrow_mut().0.color_raw[i / 3][i % 3] = v, f);
    }
    Ok(check.row())
}

/// Runs every check with instances drawn from `seed`.
pub fn run_gradcheck(seed: u64) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = check_render(&mut rng)?;
    rows.push(check_asm(&mut rng)?);
    rows.extend(check_losses(&mut rng)?);
    rows.push(check_end_to_end(&mut rng)?);
    Ok(GradcheckReport { seed, rows })
}
