use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Camera;
use crate::image::{Image, Map};
use crate::math;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PrimitiveKind {
    Sphere { radius: f64 },
    /// Axis-aligned box.
    Cuboid { half_extents: [f64; 3] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    #[serde(flatten)]
    pub kind: PrimitiveKind,
    pub center: [f64; 3],
    pub albedo: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub primitives: Vec<Primitive>,
    pub background: [f64; 3],
    pub bbox_min: [f64; 3],
    pub bbox_max: [f64; 3],
    pub light_dir: [f64; 3],
    pub ambient: f64,
}

impl Primitive {
    fn extent(&self) -> [f64; 3] {
        match self.kind {
            PrimitiveKind::Sphere { radius } => [radius; 3],
            PrimitiveKind::Cuboid { half_extents } => half_extents,
        }
    }

    /// Nearest hit distance `t > 0` along a unit-direction ray and the outward normal there.
    fn intersect(&self, origin: [f64; 3], dir: [f64; 3]) -> Option<(f64, [f64; 3])> {
        match self.kind {
            PrimitiveKind::Sphere { radius } => {
                let oc = math::sub(origin, self.center);
                let b = math::dot(oc, dir);
                let c = math::dot(oc, oc) - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let t = if -b - sq > 0.0 { -b - sq } else { -b + sq };
                if t <= 0.0 {
                    return None;
                }
                let n = math::scale(math::sub(math::madd(origin, dir, t), self.center), 1.0 / radius);
                Some((t, n))
            }
            PrimitiveKind::Cuboid { half_extents } => {
                let mut t0 = f64::NEG_INFINITY;
                let mut t1 = f64::INFINITY;
                let mut axis = 0;
                for k in 0..3 {
                    let lo = self.center[k] - half_extents[k];
                    let hi = self.center[k] + half_extents[k];
                    if dir[k] == 0.0 {
                        if origin[k] < lo || origin[k] > hi {
                            return None;
                        }
                        continue;
                    }
                    let a = (lo - origin[k]) / dir[k];
                    let b = (hi - origin[k]) / dir[k];
                    let (near, far) = if a < b { (a, b) } else { (b, a) };
                    if near > t0 {
                        t0 = near;
                        axis = k;
                    }
                    t1 = t1.min(far);
                }
                if t0 > t1 || t0 <= 0.0 {
                    return None;
                }
                let mut n = [0.0; 3];
                n[axis] = if dir[axis] > 0.0 { -1.0 } else { 1.0 };
                Some((t0, n))
            }
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.primitives.is_empty() {
            return Err(Error::invalid("scene needs at least one primitive"));
        }
        if (math::norm(self.light_dir) - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("light_dir must be a unit vector"));
        }
        if !(0.0..=1.0).contains(&self.ambient) {
            return Err(Error::invalid("ambient must lie in [0, 1]"));
        }
        for p in &self.primitives {
            let e = p.extent();
            if e.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::invalid("primitive size must be positive"));
            }
            for k in 0..3 {
                if p.center[k] - e[k] < self.bbox_min[k] || p.center[k] + e[k] > self.bbox_max[k] {
                    return Err(Error::invalid("primitive extends outside the scene bbox"));
                }
            }
            if p.albedo.iter().any(|a| !(0.0..=1.0).contains(a)) {
                return Err(Error::invalid("albedo must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    /// Three spheres and a box resting on a ground slab, inside `[-1.5, 1.5]³`.
    pub fn fixture() -> Self {
        let top = -0.48;
        let sphere = |x: f64, y: f64, r: f64, albedo: [f64; 3]| Primitive {
            kind: PrimitiveKind::Sphere { radius: r },
            center: [x, y, top + r],
            albedo,
        };
        Self {
            primitives: vec![
                Primitive {
                    kind: PrimitiveKind::Cuboid {
                        half_extents: [1.3, 1.3, 0.12],
                    },
                    center: [0.0, 0.0, top - 0.12],
                    albedo: [0.62, 0.52, 0.22],
                },
                sphere(0.55, 0.5, 0.42, [0.85, 0.15, 0.1]),
                sphere(0.3, -0.6, 0.42, [0.2, 0.75, 0.25]),
                sphere(-0.55, 0.45, 0.37, [0.15, 0.3, 0.85]),
                Primitive {
                    kind: PrimitiveKind::Cuboid {
                        half_extents: [0.25, 0.25, 0.23],
                    },
                    center: [-0.6, -0.6, top + 0.23],
                    albedo: [0.9, 0.8, 0.15],
                },
            ],
            background: [0.12, 0.16, 0.25],
            bbox_min: [-1.5; 3],
            bbox_max: [1.5; 3],
            light_dir: math::normalize([0.4, 0.3, 0.85]),
            ambient: 0.3,
        }
    }
}

/// Exact clean render and ray-distance depth, one ray per pixel center.
///
/// Misses show the background at depth `far`; depths are clamped to `[near, far]`.
pub fn gt_render(scene: &SceneSpec, camera: &Camera) -> (Image<f64>, Map<f64>) {
    let origin = camera.origin();
    let mut color = Vec::with_capacity(camera.width * camera.height);
    let mut depth = Vec::with_capacity(camera.width * camera.height);
    for py in 0..camera.height {
        for px in 0..camera.width {
            let dir = camera.direction_through(px as f64 + 0.5, py as f64 + 0.5);
            let hit = scene
                .primitives
                .iter()
                .filter_map(|p| p.intersect(origin, dir).map(|(t, n)| (t, n, p)))
                .min_by(|a, b| a.0.total_cmp(&b.0));
            match hit {
                Some((t, n, p)) if t <= camera.far => {
                    let shade = scene.ambient + (1.0 - scene.ambient) * math::dot(n, scene.light_dir).max(0.0);
                    color.push(p.albedo.map(|a| a * shade));
                    depth.push([t.clamp(camera.near, camera.far)]);
                }
                _ => {
                    color.push(scene.background);
                    depth.push([camera.far]);
                }
            }
        }
    }
    (
        Image::from_pixels(camera.width, camera.height, color).expect("sized"),
        Image::from_pixels(camera.width, camera.height, depth).expect("sized"),
    )
}
