use std::fs;
use std::path::Path;

use hazefield::io::read_pfm;
use hazefield::synth::{
    gt_render, load_training_set, DatasetManifest, FixtureSpec, GroundTruthViews, RigSpec, SceneSpec, MANIFEST_FILE,
};

fn small() -> FixtureSpec {
    FixtureSpec {
        n_views: 4,
        n_test_views: 2,
        rig: RigSpec {
            width: 24,
            height: 20,
            focal: 26.0,
            ..RigSpec::default()
        },
        ..FixtureSpec::default()
    }
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in ["", "images", "clean", "depth"] {
        let d = dir.join(sub);
        let mut names: Vec<_> = fs::read_dir(&d).unwrap().map(|e| e.unwrap().path()).collect();
        names.sort();
        for p in names.into_iter().filter(|p| p.is_file()) {
            out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
        }
    }
    out
}

#[test]
fn rebuilding_gives_identical_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    small().build(&SceneSpec::fixture(), 0.162, 0.8, a.path()).unwrap();
    small().build(&SceneSpec::fixture(), 0.162, 0.8, b.path()).unwrap();
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert_eq!(fa.len(), 1 + 3 * 6);
    assert!(fa == fb);
}

#[test]
fn hazy_pixels_lie_between_clean_and_airlight() {
    let dir = tempfile::tempdir().unwrap();
    small().build(&SceneSpec::fixture(), 0.162, 0.8, dir.path()).unwrap();
    let views = GroundTruthViews::load(dir.path()).unwrap();
    let data = load_training_set::<f64>(dir.path()).unwrap();
    let half_code = 0.5 / 255.0 + 1e-12;
    for (q, clean) in data.images.iter().zip(&views.train_clean) {
        for (h, c) in q.values.values().zip(clean.values()) {
            // the stored clean image is itself 8-bit
            let (lo, hi) = if c < 0.8 { (c, 0.8) } else { (0.8, c) };
            assert!(h >= lo - 2.0 * half_code && h <= hi + 2.0 * half_code, "{h} outside [{lo}, {hi}]");
        }
    }
    assert_eq!(views.beta, 0.162);
    assert_eq!(views.airlight, 0.8);
}

#[test]
fn background_haze_follows_the_far_plane() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small().build(&SceneSpec::fixture(), 0.162, 0.8, dir.path()).unwrap();
    let data = load_training_set::<f64>(dir.path()).unwrap();
    let gt = manifest.gt.as_ref().unwrap();
    let depth = read_pfm::<f64>(&dir.path().join(&gt.depth[0])).unwrap();
    let t = (-0.162 * manifest.far).exp();
    let bg = manifest.background;
    let mut seen = 0;
    for (k, d) in depth.values().enumerate() {
        if d == manifest.far {
            let px = data.images[0].values.pixels()[k];
            for c in 0..3 {
                let want = bg[c] * t + 0.8 * (1.0 - t);
                assert!((px[c] - want).abs() <= 0.5 / 255.0 + 1e-9);
            }
            seen += 1;
        }
    }
    assert!(seen > 0, "no background pixels in view 0");
}

#[test]
fn deeper_surfaces_of_one_color_look_hazier() {
    let scene = SceneSpec::fixture();
    let (cams, _) = small().cameras().unwrap();
    let (clean, depth) = gt_render(&scene, &cams[0]);
    let hazy = hazefield::haze::apply_asm(&clean, &depth, 0.162, 0.8).unwrap();
    // same clean color, different depth: the farther one sits closer to A
    let px: Vec<_> = clean.values().zip(depth.values().flat_map(|d| [d; 3])).zip(hazy.values()).collect();
    let mut pairs = 0;
    for &((c0, d0), h0) in px.iter().step_by(7) {
        for &((c1, d1), h1) in px.iter().step_by(11) {
            if c0 == c1 && d0 < d1 {
                assert!((h1 - 0.8).abs() <= (h0 - 0.8).abs() + 1e-15);
                pairs += 1;
            }
        }
    }
    assert!(pairs > 100, "only {pairs} comparable pairs");
}

#[test]
fn training_loader_ignores_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    small().build(&SceneSpec::fixture(), 0.2, 0.9, dir.path()).unwrap();
    let with_gt = load_training_set::<f32>(dir.path()).unwrap();
    let path = dir.path().join(MANIFEST_FILE);
    let mut m: serde_json::Value = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
    m.as_object_mut().unwrap().remove("gt");
    fs::write(&path, serde_json::to_vec(&m).unwrap()).unwrap();
    for sub in ["clean", "depth"] {
        fs::remove_dir_all(dir.path().join(sub)).unwrap();
    }
    let without = load_training_set::<f32>(dir.path()).unwrap();
    assert_eq!(with_gt.images, without.images);
    assert_eq!(with_gt.cameras.len(), 4);
    let (manifest, _) = DatasetManifest::load(dir.path()).unwrap();
    assert!(manifest.gt.is_none());
    assert!(GroundTruthViews::load(dir.path()).is_err());
}

#[test]
fn zero_beta_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let err = small().build(&SceneSpec::fixture(), 0.0, 0.8, dir.path()).unwrap_err();
    assert!(err.to_string().contains("beta must be positive"));
}

#[test]
fn tiny_beta_leaves_images_within_quantization_of_clean() {
    let dir = tempfile::tempdir().unwrap();
    small().build(&SceneSpec::fixture(), 1e-6, 0.8, dir.path()).unwrap();
    let data = load_training_set::<f64>(dir.path()).unwrap();
    let views = GroundTruthViews::load(dir.path()).unwrap();
    for (q, c) in data.images.iter().zip(&views.train_clean) {
        for (h, v) in q.values.values().zip(c.values()) {
            assert!((h - v).abs() <= 1.0 / 255.0 + 1e-12);
        }
    }
}
