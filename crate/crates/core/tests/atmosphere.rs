use hazefield::haze::{apply_asm, asm_backward, invert_asm, quantize, transmission, QuantizedImage};
use hazefield::image::{Image, Map};
use hazefield::losses::{cd_loss, mse_loss, rec_loss, total_loss, tv_loss, LossWeights};
use hazefield::optim::{adam_step, AdamState, LrSchedule};
use hazefield::trainer::TrainConfig;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn half_gray_snaps_to_code_128() {
    let q = quantize(&Image::filled(2, 1, [0.5f64; 3]), 256).unwrap();
    assert_eq!(q.codes(), vec![128; 6]);
    let v = q.values.get(0, 0)[0];
    assert_eq!(v, 128.0 / 255.0);
    assert!(close(q.lo.get(0, 0)[0], 127.5 / 255.0, 1e-15));
    assert!(close(q.hi.get(1, 0)[2], 128.5 / 255.0, 1e-15));
    assert!(close(q.lo.get(0, 0)[0], 0.50000, 1e-5) && close(q.hi.get(0, 0)[0], 0.50392, 1e-5));

    let q32 = quantize(&Image::filled(1, 1, [0.5f32; 3]), 256).unwrap();
    assert_eq!(q32.codes(), vec![128; 3]);

    let black = quantize(&Image::filled(1, 1, [0.0f64; 3]), 256).unwrap();
    assert_eq!(black.lo.get(0, 0), [0.0; 3]);
    assert!(close(black.hi.get(0, 0)[1], 1.0 / 510.0, 1e-15));
}

#[test]
fn codes_read_back_from_bytes() {
    let bytes: Vec<u8> = (0..12).map(|k| (k * 21) as u8).collect();
    let q = QuantizedImage::<f64>::from_codes(2, 2, &bytes).unwrap();
    assert_eq!(q.codes(), bytes.iter().map(|&b| b as u32).collect::<Vec<_>>());
    assert!(QuantizedImage::<f64>::from_codes(3, 2, &bytes).is_err());
}

#[test]
fn zero_width_interval_with_unit_lambda_is_mse() {
    let target = Image::from_fn(5, 4, |x, y| [0.1 * x as f64, 0.2 * y as f64, 0.05 * (x + y) as f64]);
    let pred = Image::from_fn(5, 4, |x, y| [0.3, 0.07 * (x * y) as f64, 1.0 - 0.1 * x as f64]);
    let degenerate = QuantizedImage {
        values: target.clone(),
        lo: target.clone(),
        hi: target.clone(),
        levels: 256,
    };
    let (rec, d_rec) = rec_loss(&pred, &degenerate, 1.0).unwrap();
    let (mse, d_mse) = mse_loss(&target, &pred).unwrap();
    assert!(close(rec, mse, 1e-15));
    for (a, b) in d_rec.values().zip(d_mse.values()) {
        assert!(close(a, b, 1e-15));
    }
}

#[test]
fn predictions_inside_the_interval_cost_lambda_times_mse() {
    let stored = quantize(&Image::filled(3, 3, [0.4f64, 0.6, 0.8]), 256).unwrap();
    let pred = stored.values.map(|p| p.map(|v| v + 0.0015));
    let (rec, _) = rec_loss(&pred, &stored, 0.1).unwrap();
    let (mse, _) = mse_loss(&stored.values, &pred).unwrap();
    assert!(close(rec, 0.1 * mse, 1e-18));
    assert!(close(rec, 0.1 * 0.0015 * 0.0015, 1e-15));
}

#[test]
fn black_object_under_ground_truth_haze() {
    let t = transmission(5.0f64, 0.162).unwrap();
    assert!(close(t, 0.4449, 1e-4));
    let clean = Image::filled(2, 2, [0.0f64; 3]);
    let depth = Map::filled(2, 2, [5.0]);
    let hazy = apply_asm(&clean, &depth, 0.162, 0.8).unwrap();
    for v in hazy.values() {
        assert!(close(v, 0.8 * (1.0 - (-0.81f64).exp()), 1e-15));
        assert!(close(v, 0.4441, 1e-4));
    }
    let back = invert_asm(&hazy, &depth, 0.162, 0.8, 0.05).unwrap();
    assert!(back.values().all(|v| v.abs() < 1e-12));
}

#[test]
fn object_matching_airlight_has_no_depth_or_beta_gradient() {
    let clean = Image::filled(3, 2, [0.8f64; 3]);
    let depth = Map::from_fn(3, 2, |x, y| [1.0 + x as f64 + y as f64]);
    let d_hazy = Image::from_fn(3, 2, |x, _| [1.0, -0.5, 0.25 * x as f64]);
    let g = asm_backward(&clean, &depth, 0.162, 0.8, &d_hazy).unwrap();
    assert_eq!(g.d_beta, 0.0);
    assert!(g.d_depth.values().all(|v| v == 0.0));
}

#[test]
fn horizontal_ramp_total_variation_is_the_slope() {
    let c = 0.05;
    let ramp = Image::from_fn(9, 6, |x, _| [c * x as f64; 3]);
    let (v, _) = tv_loss(&ramp, 1e-3).unwrap();
    assert!(close(v, (c * c + 1e-6f64).sqrt(), 1e-12));
    let (flat, _) = tv_loss(&Image::filled(4, 4, [0.3f64; 3]), 1e-3).unwrap();
    assert!(close(flat, 1e-3, 1e-15));
}

#[test]
fn contrast_term_rewards_sharper_estimates() {
    let hazy = Image::from_fn(8, 8, |x, y| [0.5 + 0.1 * ((x + y) % 2) as f64; 3]);
    let sharp = Image::from_fn(8, 8, |x, y| [0.2 + 0.6 * ((x + y) % 2) as f64; 3]);
    let dull = Image::filled(8, 8, [0.55f64; 3]);
    assert!(cd_loss(&hazy, &sharp, 4).unwrap().0 < 0.0);
    assert!(cd_loss(&hazy, &dull, 4).unwrap().0 > 0.0);
    assert_eq!(cd_loss(&hazy, &hazy, 4).unwrap().0, 0.0);
}

#[test]
fn weighted_total_example() {
    let w = LossWeights {
        lambda_cons: 0.1,
        lambda_cd: 0.01,
        lambda_tv: 0.003,
        ..LossWeights::default()
    };
    assert!(close(total_loss(1.0, 2.0, -1.0, 4.0, &w).unwrap(), 1.202, 1e-12));
    assert!(total_loss(f64::INFINITY, 0.0, 0.0, 0.0, &w).is_err());
}

#[test]
fn adam_settles_a_quadratic() {
    let mut x = vec![-2.0f64, 7.0];
    let target = [3.0, -1.0];
    let mut state = AdamState::new(2);
    for _ in 0..3000 {
        let g: Vec<f64> = x.iter().zip(target).map(|(a, b)| 2.0 * (a - b)).collect();
        adam_step(&mut [&mut x[..]], &[&g[..]], &mut state, 0.01).unwrap();
    }
    assert!(close(x[0], 3.0, 1e-2) && close(x[1], -1.0, 1e-2), "{x:?}");
    assert_eq!(state.step_count, 3000);
}

#[test]
fn partial_schedule_in_config_keeps_remaining_defaults() {
    let cfg: TrainConfig = serde_json::from_str(r#"{"schedule": {"atmosphere_lr": 0.0003}}"#).unwrap();
    let rates = cfg.schedule.lr_at(0, cfg.total_iterations).unwrap();
    assert_eq!(rates.atmosphere, 3e-4);
    assert_eq!(rates.grid, LrSchedule::default().grid_lr);
    let late = cfg.schedule.lr_at(cfg.total_iterations - 1, cfg.total_iterations).unwrap();
    assert!(close(late.grid, 1e-2 * 0.33f64.powi(4), 1e-18));
    assert!(serde_json::from_str::<TrainConfig>(r#"{"schedul": {}}"#).is_err());
}
