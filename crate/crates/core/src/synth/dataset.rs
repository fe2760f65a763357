use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Camera;
use crate::haze::{self, QuantizedImage, A_MAX};
use crate::image::{Image, Map};
use crate::io;
use crate::scalar::Real;
use crate::synth::{gt_render, SceneSpec};

/// Inward-facing rig on a sphere around the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RigSpec {
    pub radius: f64,
    pub elevation_deg: [f64; 2],
    pub azimuth_offset_deg: f64,
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    pub near: f64,
    pub far: f64,
}

impl Default for RigSpec {
    fn default() -> Self {
        Self {
            radius: 4.0,
            elevation_deg: [20.0, 45.0],
            azimuth_offset_deg: 0.0,
            width: 64,
            height: 64,
            focal: 70.0,
            near: 2.0,
            far: 6.0,
        }
    }
}

/// `n` poses with equally spaced azimuths and seeded uniform elevations,
/// all looking at the origin with world +z up.
pub fn generate_cameras(n: usize, rig: &RigSpec, seed: u64) -> Result<Vec<Camera>> {
    if n < 2 {
        return Err(Error::invalid("need at least 2 cameras"));
    }
    let [lo, hi] = rig.elevation_deg;
    if !(lo <= hi && lo > -90.0 && hi < 90.0) {
        return Err(Error::invalid("elevation range must lie inside (-90, 90) degrees"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|k| {
            let az = (rig.azimuth_offset_deg + 360.0 * k as f64 / n as f64).to_radians();
            let el = if hi > lo { rng.gen_range(lo..=hi) } else { lo }.to_radians();
            let eye = [
                rig.radius * el.cos() * az.cos(),
                rig.radius * el.cos() * az.sin(),
                rig.radius * el.sin(),
            ];
            Camera::look_at(eye, [0.0; 3], [0.0, 0.0, 1.0], rig.width, rig.height, rig.focal, rig.near, rig.far)
        })
        .collect()
}

/// Camera as stored in a manifest; `cam_to_world` is the 3×4 matrix row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraRecord {
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    pub principal_point: [f64; 2],
    pub cam_to_world: [f64; 12],
}

impl CameraRecord {
    pub fn from_camera(c: &Camera) -> Self {
        let mut m = [0.0; 12];
        for r in 0..3 {
            m[r * 4..r * 4 + 4].copy_from_slice(&c.cam_to_world[r]);
        }
        Self {
            width: c.width,
            height: c.height,
            focal: c.focal,
            principal_point: c.principal_point,
            cam_to_world: m,
        }
    }

    pub fn to_camera(&self, near: f64, far: f64) -> Result<Camera> {
        let mut m = [[0.0; 4]; 3];
        for (r, row) in m.iter_mut().enumerate() {
            row.copy_from_slice(&self.cam_to_world[r * 4..r * 4 + 4]);
        }
        let cam = Camera {
            width: self.width,
            height: self.height,
            focal: self.focal,
            principal_point: self.principal_point,
            cam_to_world: m,
            near,
            far,
        };
        cam.validate()?;
        Ok(cam)
    }
}

/// Evaluation-only block of a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    pub beta: f64,
    #[serde(rename = "A")]
    pub airlight: f64,
    pub clean: Vec<String>,
    pub depth: Vec<String>,
    #[serde(default)]
    pub test_clean: Vec<String>,
    #[serde(default)]
    pub test_depth: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub cameras: Vec<CameraRecord>,
    pub images: Vec<String>,
    #[serde(default)]
    pub test_cameras: Vec<CameraRecord>,
    #[serde(default)]
    pub test_images: Vec<String>,
    pub background: [f64; 3],
    pub near: f64,
    pub far: f64,
    pub levels: u32,
    pub bbox_min: [f64; 3],
    pub bbox_max: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt: Option<GroundTruth>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl DatasetManifest {
    /// Accepts either the dataset directory or the manifest file itself.
    pub fn resolve(path: &Path) -> PathBuf {
        if path.is_dir() {
            path.join(MANIFEST_FILE)
        } else {
            path.to_path_buf()
        }
    }

    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let file = Self::resolve(path);
        let manifest: Self = io::read_json(&file)?;
        let root = file.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((manifest, root))
    }
}

/// What the parameter estimation needs: poses, observations, scene metadata.
/// Built without touching the ground-truth block.
#[derive(Debug, Clone, PartialEq)]
pub struct HazyDataset<T> {
    pub cameras: Vec<Camera>,
    pub images: Vec<QuantizedImage<T>>,
    pub background: [f64; 3],
    pub near: f64,
    pub far: f64,
    pub bbox_min: [f64; 3],
    pub bbox_max: [f64; 3],
}

/// The manifest minus its `gt` block, which serde skips unread.
#[derive(Deserialize)]
struct TrainingManifest {
    cameras: Vec<CameraRecord>,
    images: Vec<String>,
    background: [f64; 3],
    near: f64,
    far: f64,
    levels: u32,
    bbox_min: [f64; 3],
    bbox_max: [f64; 3],
}

fn load_quantized<T: Real>(path: &Path, levels: u32) -> Result<QuantizedImage<T>> {
    let (w, h, bytes) = io::read_png_rgb8(path)?;
    if levels == 256 {
        return QuantizedImage::from_codes(w, h, &bytes);
    }
    let top = T::from_u32(levels - 1).unwrap();
    let values = Image::from_pixels(
        w,
        h,
        bytes
            .chunks_exact(3)
            .map(|p| [0, 1, 2].map(|c| (T::lit(p[c] as f64 / 255.0) * top).round() / top))
            .collect(),
    )?;
    QuantizedImage::from_values(values, levels)
}

pub fn load_training_set<T: Real>(path: &Path) -> Result<HazyDataset<T>> {
    let file = DatasetManifest::resolve(path);
    let m: TrainingManifest = io::read_json(&file)?;
    let root = file.parent().map(Path::to_path_buf).unwrap_or_default();
    if m.cameras.len() != m.images.len() || m.cameras.is_empty() {
        return Err(Error::corrupt(&file, "manifest needs one camera per image"));
    }
    if !(2..=256).contains(&m.levels) {
        return Err(Error::corrupt(&file, "levels must lie in [2, 256]"));
    }
    let cameras = m
        .cameras
        .iter()
        .map(|c| c.to_camera(m.near, m.far))
        .collect::<Result<Vec<_>>>()?;
    let images = m
        .images
        .iter()
        .zip(&cameras)
        .map(|(name, cam)| {
            let q = load_quantized::<T>(&root.join(name), m.levels)?;
            if q.width() != cam.width || q.height() != cam.height {
                return Err(Error::corrupt(root.join(name), "image size disagrees with its camera"));
            }
            Ok(q)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HazyDataset {
        cameras,
        images,
        background: m.background,
        near: m.near,
        far: m.far,
        bbox_min: m.bbox_min,
        bbox_max: m.bbox_max,
    })
}

/// Held-out and training ground truth, loaded for evaluation only.
#[derive(Debug, Clone)]
pub struct GroundTruthViews {
    pub beta: f64,
    pub airlight: f64,
    pub test_cameras: Vec<Camera>,
    pub test_clean: Vec<Image<f64>>,
    pub test_hazy: Vec<Image<f64>>,
    pub train_clean: Vec<Image<f64>>,
}

impl GroundTruthViews {
    pub fn load(path: &Path) -> Result<Self> {
        let (m, root) = DatasetManifest::load(path)?;
        let gt = m.gt.as_ref().ok_or(Error::MissingGroundTruth)?;
        if gt.test_clean.len() != m.test_cameras.len() || m.test_images.len() != m.test_cameras.len() {
            return Err(Error::corrupt(DatasetManifest::resolve(path), "held-out views are incomplete"));
        }
        let read_all = |names: &[String]| {
            names
                .iter()
                .map(|n| io::read_png::<f64>(&root.join(n)))
                .collect::<Result<Vec<_>>>()
        };
        Ok(Self {
            beta: gt.beta,
            airlight: gt.airlight,
            test_cameras: m
                .test_cameras
                .iter()
                .map(|c| c.to_camera(m.near, m.far))
                .collect::<Result<_>>()?,
            test_clean: read_all(&gt.test_clean)?,
            test_hazy: read_all(&m.test_images)?,
            train_clean: read_all(&gt.clean)?,
        })
    }
}

/// What [`build_dataset`] needs besides scene and cameras.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildSpec {
    pub beta: f64,
    pub airlight: f64,
    pub levels: u32,
}

fn render_view(
    scene: &SceneSpec,
    cam: &Camera,
    spec: &BuildSpec,
    out_dir: &Path,
    stem: &str,
) -> Result<(String, String, String)> {
    let (clean, depth): (Image<f64>, Map<f64>) = gt_render(scene, cam);
    let hazy = haze::apply_asm(&clean, &depth, spec.beta, spec.airlight)?;
    let q = haze::quantize(&hazy, spec.levels)?;
    let names = (
        format!("images/{stem}.png"),
        format!("clean/{stem}.png"),
        format!("depth/{stem}.pfm"),
    );
    io::write_png(&out_dir.join(&names.0), &q.values)?;
    io::write_png(&out_dir.join(&names.1), &clean)?;
    io::write_pfm(&out_dir.join(&names.2), &depth)?;
    Ok(names)
}

/// Renders, hazes, quantizes and writes every view plus `manifest.json`.
pub fn build_dataset(
    scene: &SceneSpec,
    cameras: &[Camera],
    test_cameras: &[Camera],
    spec: &BuildSpec,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    if !(spec.beta > 0.0) {
        return Err(Error::invalid("beta must be positive"));
    }
    if !(spec.airlight > 0.0 && spec.airlight < A_MAX) {
        return Err(Error::invalid("A must lie in (0, 1.5)"));
    }
    if !(2..=256).contains(&spec.levels) {
        return Err(Error::invalid("levels must lie in [2, 256]"));
    }
    scene.validate()?;
    let (near, far) = match cameras.first() {
        Some(c) => (c.near, c.far),
        None => return Err(Error::invalid("need at least one camera")),
    };
    if cameras.iter().chain(test_cameras).any(|c| c.near != near || c.far != far) {
        return Err(Error::invalid("all cameras must share near/far"));
    }
    for sub in ["images", "clean", "depth"] {
        io::ensure_dir(&out_dir.join(sub))?;
    }
    let mut manifest = DatasetManifest {
        cameras: cameras.iter().map(CameraRecord::from_camera).collect(),
        images: Vec::new(),
        test_cameras: test_cameras.iter().map(CameraRecord::from_camera).collect(),
        test_images: Vec::new(),
        background: scene.background,
        near,
        far,
        levels: spec.levels,
        bbox_min: scene.bbox_min,
        bbox_max: scene.bbox_max,
        gt: None,
    };
    let mut gt = GroundTruth {
        beta: spec.beta,
        airlight: spec.airlight,
        clean: Vec::new(),
        depth: Vec::new(),
        test_clean: Vec::new(),
        test_depth: Vec::new(),
    };
    for (k, cam) in cameras.iter().enumerate() {
        let (i, c, d) = render_view(scene, cam, spec, out_dir, &format!("train_{k:03}"))?;
        manifest.images.push(i);
        gt.clean.push(c);
        gt.depth.push(d);
    }
    for (k, cam) in test_cameras.iter().enumerate() {
        let (i, c, d) = render_view(scene, cam, spec, out_dir, &format!("test_{k:03}"))?;
        manifest.test_images.push(i);
        gt.test_clean.push(c);
        gt.test_depth.push(d);
    }
    manifest.gt = Some(gt);
    io::write_json(&out_dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Camera layout and quantization of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FixtureSpec {
    pub n_views: usize,
    /// Held-out views sit halfway between training azimuths.
    pub n_test_views: usize,
    pub rig: RigSpec,
    pub levels: u32,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            n_views: 20,
            n_test_views: 5,
            rig: RigSpec::default(),
            levels: 256,
            seed: 0,
        }
    }
}

impl FixtureSpec {
    pub fn cameras(&self) -> Result<(Vec<Camera>, Vec<Camera>)> {
        let train = generate_cameras(self.n_views, &self.rig, self.seed)?;
        let test = if self.n_test_views == 0 {
            Vec::new()
        } else {
            let rig = RigSpec {
                azimuth_offset_deg: self.rig.azimuth_offset_deg + 180.0 / self.n_views as f64,
                ..self.rig.clone()
            };
            generate_cameras(self.n_test_views, &rig, self.seed.wrapping_add(1))?
        };
        Ok((train, test))
    }

    pub fn build(&self, scene: &SceneSpec, beta: f64, airlight: f64, out_dir: &Path) -> Result<DatasetManifest> {
        let (train, test) = self.cameras()?;
        let spec = BuildSpec {
            beta,
            airlight,
            levels: self.levels,
        };
        build_dataset(scene, &train, &test, &spec, out_dir)
    }
}
