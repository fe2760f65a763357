//! Randomized invariants shared by the property tests and the acceptance
//! gate. Every check runs through a deterministic proptest runner.
#![allow(dead_code)]

use hazefield::field::{render_ray, Camera, Ray, VoxelGrid};
use hazefield::haze::{apply_asm, invert_asm, quantize, AtmosphereParams, QuantizedImage, A_MAX};
use hazefield::image::{Image, Map};
use hazefield::losses::{cons_loss, local_contrast, smrc_penalty, tv_loss};
use hazefield::optim::{adam_step, AdamState, LrSchedule};
use hazefield::synth::HazyDataset;
use hazefield::trainer::{Checkpoint, TrainConfig, Trainer};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CASES: u32 = 1000;

/// Runs `test` on `cases` deterministic draws of `strategy`.
pub fn check<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn random_grid(rng: &mut ChaCha8Rng, res: usize, density_scale: f64) -> VoxelGrid<f64> {
    let mut g = VoxelGrid::new([res; 3], [-1.0; 3], [1.0; 3], [0.1, 0.5, 0.9]).unwrap();
    for d in g.density_raw.iter_mut() {
        *d = density_scale * rng.gen_range(-1.0..1.0);
    }
    for c in g.color_raw.iter_mut() {
        *c = [0; 3].map(|_| rng.gen_range(-4.0..4.0));
    }
    g
}

fn random_ray(rng: &mut ChaCha8Rng) -> Ray<f64> {
    let eye = [0; 3].map(|_| rng.gen_range(-3.0..3.0));
    let target = [0; 3].map(|_| rng.gen_range(-1.2..1.2));
    let d: [f64; 3] = [target[0] - eye[0], target[1] - eye[1], target[2] - eye[2]];
    let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    let dir = if n > 1e-3 { d.map(|v| v / n) } else { [0.0, 0.0, 1.0] };
    let near = rng.gen_range(0.0..1.0);
    let far = near + rng.gen_range(0.5..8.0);
    Ray::new(eye, dir, near, far).unwrap()
}

fn render_case() -> impl Strategy<Value = (u64, usize, usize, f64, bool)> {
    (any::<u64>(), 2usize..6, 2usize..96, 0.1f64..12.0, any::<bool>())
}

/// Rendered transmittance starts at 1 and never increases along the ray.
pub fn transmittance_monotone(cases: u32) -> Result<(), String> {
    check(cases, render_case(), |(seed, res, n, scale, jitter)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = random_grid(&mut rng, res, scale);
        let ray = random_ray(&mut rng);
        let mut jrng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let (_, tape) = render_ray(&grid, &ray, n, jitter.then_some(&mut jrng as &mut dyn rand::RngCore)).unwrap();
        if let Some(first) = tape.samples.first() {
            prop_assert_eq!(first.transmittance, 1.0);
        }
        for w in tape.samples.windows(2) {
            prop_assert!(w[1].transmittance <= w[0].transmittance);
        }
        if let Some(last) = tape.samples.last() {
            prop_assert!(tape.final_transmittance <= last.transmittance);
        }
        Ok(())
    })
}

/// Weights are non-negative and sum to at most one; depth stays in
/// `[near, far]`; color stays in `[0, 1]`.
pub fn weights_normalized(cases: u32) -> Result<(), String> {
    check(cases, render_case(), |(seed, res, n, scale, jitter)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = random_grid(&mut rng, res, scale);
        let ray = random_ray(&mut rng);
        let mut jrng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let (out, tape) = render_ray(&grid, &ray, n, jitter.then_some(&mut jrng as &mut dyn rand::RngCore)).unwrap();
        let mut sum = 0.0;
        for s in &tape.samples {
            prop_assert!(s.weight() >= 0.0);
            sum += s.weight();
        }
        prop_assert!(sum <= 1.0 + 1e-6, "sum of weights {}", sum);
        prop_assert!((out.opacity - sum).abs() <= 1e-9);
        prop_assert!(out.depth >= ray.near - 1e-9 && out.depth <= ray.far + 1e-9, "depth {}", out.depth);
        prop_assert!(out.color.iter().all(|&c| (0.0..=1.0).contains(&c)));
        Ok(())
    })
}

fn smrc_case() -> impl Strategy<Value = (f64, f64, f64, f64)> {
    (0.0f64..=1.0, 1e-4f64..0.1, -1.0f64..2.0, 1e-3f64..=1.0)
}

/// The soft-margin penalty never exceeds the squared error, and is zero
/// exactly at the stored value.
pub fn smrc_dominance(cases: u32) -> Result<(), String> {
    check(cases, smrc_case(), |(q, half, u, lambda)| {
        let (lo, hi) = ((q - half).max(0.0), (q + half).min(1.0));
        let (v, _) = smrc_penalty(u, q, lo, hi, lambda);
        prop_assert!(v <= (u - q) * (u - q));
        prop_assert!(v >= 0.0);
        prop_assert_eq!(v == 0.0, u == q);
        prop_assert_eq!(smrc_penalty(q, q, lo, hi, lambda).0, 0.0);
        Ok(())
    })
}

fn asm_case() -> impl Strategy<Value = (u64, f64, f64, f64)> {
    (any::<u64>(), 0.0f64..2.0, 0.01f64..1.49, 0.0f64..8.0)
}

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Image<f64> {
    Image::from_fn(w, h, |_, _| [0; 3].map(|_| rng.gen_range(0.0..1.0)))
}

/// `|I − A|` is nonincreasing in β and `I` stays between `J` and `A`.
pub fn airlight_squeeze(cases: u32) -> Result<(), String> {
    check(cases, asm_case(), |(seed, beta, a, extra)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let j = random_image(&mut rng, 4, 3);
        let d: Map<f64> = Image::from_fn(4, 3, |_, _| [rng.gen_range(0.0..10.0)]);
        let lo = apply_asm(&j, &d, beta, a).unwrap();
        let hi = apply_asm(&j, &d, beta + extra, a).unwrap();
        for ((p, q), jp) in lo.pixels().iter().zip(hi.pixels()).zip(j.pixels()) {
            for c in 0..3 {
                prop_assert!((q[c] - a).abs() <= (p[c] - a).abs() + 1e-15);
                let (mn, mx) = (jp[c].min(a), jp[c].max(a));
                prop_assert!(p[c] >= mn - 1e-15 && p[c] <= mx + 1e-15);
            }
        }
        Ok(())
    })
}

/// Inversion with the true parameters recovers the clean image: to 1e-6
/// without quantization and to half a code step over `t` with 8-bit codes.
pub fn asm_round_trip(cases: u32) -> Result<(), String> {
    check(cases, asm_case(), |(seed, beta, a, _)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let j = random_image(&mut rng, 5, 4);
        let d: Map<f64> = Image::from_fn(5, 4, |_, _| [rng.gen_range(0.0..6.0)]);
        let beta = beta.max(1e-6);
        let hazy = apply_asm(&j, &d, beta, a).unwrap();
        let back = invert_asm(&hazy, &d, beta, a, 1e-3).unwrap();
        let q = quantize(&hazy, 256).unwrap();
        let back_q = invert_asm(&q.values, &d, beta, a, 1e-3).unwrap();
        for k in 0..j.len() {
            let t = (-beta * d.pixels()[k][0]).exp();
            if t < 1e-3 {
                continue;
            }
            let clipped = hazy.pixels()[k].iter().any(|&v| !(0.0..=1.0).contains(&v));
            for c in 0..3 {
                prop_assert!((back.pixels()[k][c] - j.pixels()[k][c]).abs() <= 1e-6);
                if !clipped {
                    let bound = 1.0 / (2.0 * 255.0) / t + 1e-12;
                    prop_assert!((back_q.pixels()[k][c] - j.pixels()[k][c]).abs() <= bound);
                }
            }
        }
        Ok(())
    })
}

/// Every raw value maps to `β > 0` and `A ∈ (0, 1.5)` (raws within ±30,
/// beyond which the logistic saturates in float64).
pub fn parameter_ranges(cases: u32) -> Result<(), String> {
    check(cases, (-30.0f64..30.0, -30.0f64..30.0), |(b, a)| {
        let p = AtmosphereParams::<f64> {
            beta_raw: vec![b],
            a_raw: vec![a],
        };
        prop_assert!(p.beta(0) > 0.0);
        prop_assert!(p.airlight(0) > 0.0 && p.airlight(0) < A_MAX);
        Ok(())
    })
}

/// The consistency loss ignores the image order.
pub fn cons_permutation(cases: u32) -> Result<(), String> {
    let case = (proptest::collection::vec((0.001f64..1.0, 0.01f64..1.49), 1..12), any::<u64>());
    check(cases, case, |(pairs, seed)| {
        let b: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let a: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let mut idx: Vec<usize> = (0..b.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(&mut idx[..], &mut rng);
        let pb: Vec<f64> = idx.iter().map(|&i| b[i]).collect();
        let pa: Vec<f64> = idx.iter().map(|&i| a[i]).collect();
        let x = cons_loss(&b, &a).unwrap();
        let y = cons_loss(&pb, &pa).unwrap();
        prop_assert!((x.value - y.value).abs() <= 1e-14 * (1.0 + x.value.abs()));
        for (k, &i) in idx.iter().enumerate() {
            prop_assert!((x.d_beta[i] - y.d_beta[k]).abs() <= 1e-14);
        }
        Ok(())
    })
}

/// Total variation and local contrast do not see a constant offset.
pub fn shift_invariance(cases: u32) -> Result<(), String> {
    let case = (any::<u64>(), 2usize..14, 2usize..14, -0.5f64..0.5, 1usize..6);
    check(cases, case, |(seed, w, h, shift, s)| {
        let s = s.min(w).min(h);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = random_image(&mut rng, w, h);
        let moved = img.map(|p| p.map(|v| v + shift));
        let (t0, _) = tv_loss(&img, 1e-3).unwrap();
        let (t1, _) = tv_loss(&moved, 1e-3).unwrap();
        prop_assert!((t0 - t1).abs() <= 1e-12, "tv {} vs {}", t0, t1);
        let (c0, _) = local_contrast(&img, s).unwrap();
        let (c1, _) = local_contrast(&moved, s).unwrap();
        prop_assert!((c0 - c1).abs() <= 1e-12, "contrast {} vs {}", c0, c1);
        Ok(())
    })
}

/// Cauchy–Schwarz bound on one bias-corrected Adam step relative to `lr`.
pub fn adam_step_bound(t: u64, beta1: f64, beta2: f64) -> f64 {
    let gamma = beta1 * beta1 / beta2;
    let t = t as i32;
    (1.0 - beta1) / (1.0 - beta1.powi(t))
        * ((1.0 - beta2.powi(t)) / (1.0 - beta2)).sqrt()
        * ((1.0 - gamma.powi(t)) / (1.0 - gamma)).sqrt()
}

/// Learning rates never increase; Adam steps respect the bound above.
pub fn optimizer_bounds(cases: u32) -> Result<(), String> {
    let case = (
        proptest::collection::vec(-1e3f64..1e3, 1..40),
        1e-5f64..1.0,
        1u64..5000,
        any::<u64>(),
    );
    check(cases, case, |(grads, lr, total, seed)| {
        let s = LrSchedule::default();
        let mut prev = f64::INFINITY;
        for it in (0..total).step_by((total as usize / 50).max(1)) {
            let r = s.lr_at(it, total).unwrap();
            prop_assert!(r.grid <= prev);
            prev = r.grid;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = vec![0.0f64];
        let mut state = AdamState::new(1);
        for (t, g) in grads.iter().enumerate() {
            // Occasional spikes after small gradients stress the bound.
            let g = if rng.gen_bool(0.1) { g * 1e3 } else { *g };
            let before = p[0];
            adam_step(&mut [&mut p[..]], &[&[g][..]], &mut state, lr).unwrap();
            let bound = lr * adam_step_bound(t as u64 + 1, 0.9, 0.999);
            prop_assert!((p[0] - before).abs() <= bound * (1.0 + 1e-12));
        }
        Ok(())
    })
}

/// Three 8×8 views of random quantized observations.
pub fn tiny_dataset(seed: u64) -> HazyDataset<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cameras: Vec<Camera> = (0..3)
        .map(|k| {
            let az = 2.1 * k as f64 + 0.3;
            Camera::look_at([3.0 * az.cos(), 3.0 * az.sin(), 1.0], [0.0; 3], [0.0, 0.0, 1.0], 8, 8, 8.0, 1.0, 5.0)
                .unwrap()
        })
        .collect();
    let images: Vec<QuantizedImage<f64>> = (0..3)
        .map(|_| quantize(&random_image(&mut rng, 8, 8), 256).unwrap())
        .collect();
    HazyDataset {
        cameras,
        images,
        background: [0.2, 0.3, 0.4],
        near: 1.0,
        far: 5.0,
        bbox_min: [-1.0; 3],
        bbox_max: [1.0; 3],
    }
}

pub fn tiny_config(seed: u64, total: u64) -> TrainConfig {
    TrainConfig {
        total_iterations: total,
        n_samples: 8,
        stride: 2,
        views_per_step: 2,
        grid_resolution: 4,
        seed,
        ..TrainConfig::default()
    }
}

/// Stopping at any iteration, serializing, reloading and continuing gives
/// the same bytes as an uninterrupted run; so does a second identical run.
pub fn resume_bitwise(cases: u32) -> Result<(), String> {
    check(cases, (any::<u64>(), 2u64..6, any::<u64>()), |(data_seed, total, seed)| {
        let data = tiny_dataset(data_seed);
        let config = tiny_config(seed, total);
        let split = 1 + seed % (total - 1);
        let mut straight = Trainer::new(&data, config.clone()).unwrap();
        while !straight.is_done() {
            straight.step().unwrap();
        }
        let mut again = Trainer::new(&data, config.clone()).unwrap();
        while !again.is_done() {
            again.step().unwrap();
        }
        let mut first = Trainer::new(&data, config).unwrap();
        for _ in 0..split {
            first.step().unwrap();
        }
        let bytes = first.checkpoint().to_bytes();
        let mut resumed = Trainer::resume(&data, Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
        while !resumed.is_done() {
            resumed.step().unwrap();
        }
        let want = straight.checkpoint().to_bytes();
        prop_assert!(want == resumed.checkpoint().to_bytes());
        prop_assert!(want == again.checkpoint().to_bytes());
        Ok(())
    })
}

pub type Property = (&'static str, fn(u32) -> Result<(), String>);

pub const ALL: [Property; 10] = [
    ("transmittance monotonicity", transmittance_monotone),
    ("weight normalization and bounds", weights_normalized),
    ("smrc dominance and zero set", smrc_dominance),
    ("airlight squeeze and convexity", airlight_squeeze),
    ("asm round trip", asm_round_trip),
    ("atmosphere parameter ranges", parameter_ranges),
    ("cons permutation invariance", cons_permutation),
    ("loss constant-shift invariance", shift_invariance),
    ("schedule monotone and adam bound", optimizer_bounds),
    ("determinism and checkpoint resume", resume_bitwise),
];
