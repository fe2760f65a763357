use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::scalar::{sigmoid, softplus, Real};

/// Raw density init; softplus(-2) ≈ 0.127.
pub const DEFAULT_DENSITY_RAW: f64 = -2.0;

/// Haze-free scene as an explicit grid of pre-activation values.
///
/// Values live on the `nx × ny × nz` lattice of grid vertices spanning the
/// bounding box; voxel `(x, y, z)` is stored at `(z * ny + y) * nx + x`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid<T> {
    resolution: [usize; 3],
    bbox_min: Vec3<T>,
    bbox_max: Vec3<T>,
    /// Color composited behind the last sample and returned outside the box.
    pub background: Vec3<T>,
    pub density_raw: Vec<T>,
    pub color_raw: Vec<Vec3<T>>,
}

/// Enclosing cell of a point: base vertex index plus fractional offsets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellCoords<T> {
    pub base: [usize; 3],
    pub frac: Vec3<T>,
}

/// The 8 trilinear corners; corner `k` has offset bits `(k & 1, k >> 1 & 1, k >> 2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpWeights<T> {
    pub indices: [usize; 8],
    pub weights: [T; 8],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample<T> {
    pub sigma: T,
    pub rgb: Vec3<T>,
    /// `None` when the point lies outside the bounding box.
    pub interp: Option<InterpWeights<T>>,
}

impl<T: Real> CellCoords<T> {
    #[inline]
    pub fn weights(&self) -> [T; 8] {
        let [fx, fy, fz] = self.frac;
        let one = T::one();
        let (gx, gy, gz) = (one - fx, one - fy, one - fz);
        [
            gx * gy * gz,
            fx * gy * gz,
            gx * fy * gz,
            fx * fy * gz,
            gx * gy * fz,
            fx * gy * fz,
            gx * fy * fz,
            fx * fy * fz,
        ]
    }
}

impl<T: Real> VoxelGrid<T> {
    pub fn new(resolution: [usize; 3], bbox_min: Vec3<T>, bbox_max: Vec3<T>, background: Vec3<T>) -> Result<Self> {
        Self::filled(
            resolution,
            bbox_min,
            bbox_max,
            background,
            T::lit(DEFAULT_DENSITY_RAW),
            [T::zero(); 3],
        )
    }

    pub fn filled(
        resolution: [usize; 3],
        bbox_min: Vec3<T>,
        bbox_max: Vec3<T>,
        background: Vec3<T>,
        density_raw: T,
        color_raw: Vec3<T>,
    ) -> Result<Self> {
        if resolution.iter().any(|&n| n < 2) {
            return Err(Error::invalid("grid resolution must be at least 2 per axis"));
        }
        if (0..3).any(|k| !(bbox_min[k] < bbox_max[k])) {
            return Err(Error::invalid("bbox_min must be below bbox_max on every axis"));
        }
        let n = resolution.iter().product();
        Ok(Self {
            resolution,
            bbox_min,
            bbox_max,
            background,
            density_raw: vec![density_raw; n],
            color_raw: vec![color_raw; n],
        })
    }

    #[inline]
    pub fn resolution(&self) -> [usize; 3] {
        self.resolution
    }

    #[inline]
    pub fn bbox(&self) -> (Vec3<T>, Vec3<T>) {
        (self.bbox_min, self.bbox_max)
    }

    #[inline]
    pub fn num_voxels(&self) -> usize {
        self.density_raw.len()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.resolution[1] + y) * self.resolution[0] + x
    }

    /// World position of vertex `(x, y, z)`.
    pub fn vertex_position(&self, x: usize, y: usize, z: usize) -> Vec3<T> {
        let idx = [x, y, z];
        let mut p = [T::zero(); 3];
        for k in 0..3 {
            let s = T::from_usize(idx[k]).unwrap() / T::from_usize(self.resolution[k] - 1).unwrap();
            p[k] = self.bbox_min[k] + (self.bbox_max[k] - self.bbox_min[k]) * s;
        }
        p
    }

    pub fn all_finite(&self) -> bool {
        self.density_raw.iter().all(|v| v.is_finite())
            && self.color_raw.iter().flatten().all(|v| v.is_finite())
    }

    /// Locates the enclosing cell, or `None` outside the (closed) bounding box.
    #[inline]
    pub fn locate(&self, p: Vec3<T>) -> Option<CellCoords<T>> {
        let mut base = [0usize; 3];
        let mut frac = [T::zero(); 3];
        for k in 0..3 {
            let cells = self.resolution[k] - 1;
            let extent = T::from_usize(cells).unwrap();
            let g = (p[k] - self.bbox_min[k]) / (self.bbox_max[k] - self.bbox_min[k]) * extent;
            if !(g >= T::zero() && g <= extent) {
                return None;
            }
            let i = g.floor().to_usize().unwrap().min(cells - 1);
            base[k] = i;
            frac[k] = g - T::from_usize(i).unwrap();
        }
        Some(CellCoords { base, frac })
    }

    #[inline]
    pub fn corner_indices(&self, base: [usize; 3]) -> [usize; 8] {
        let sx = 1;
        let sy = self.resolution[0];
        let sz = self.resolution[0] * self.resolution[1];
        let b = self.index(base[0], base[1], base[2]);
        [
            b,
            b + sx,
            b + sy,
            b + sx + sy,
            b + sz,
            b + sx + sz,
            b + sy + sz,
            b + sx + sy + sz,
        ]
    }

    /// Trilinearly interpolated raw density and raw color at a located cell.
    #[inline]
    pub fn interpolate_raw(&self, cell: &CellCoords<T>) -> (T, Vec3<T>) {
        let idx = self.corner_indices(cell.base);
        let w = cell.weights();
        let mut s = T::zero();
        let mut c = [T::zero(); 3];
        for k in 0..8 {
            let i = idx[k];
            s += w[k] * self.density_raw[i];
            let cr = self.color_raw[i];
            c[0] += w[k] * cr[0];
            c[1] += w[k] * cr[1];
            c[2] += w[k] * cr[2];
        }
        (s, c)
    }

    /// Activated density and color at `point`.
    pub fn sample_field(&self, point: Vec3<T>) -> Result<FieldSample<T>> {
        if point.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSamplePosition);
        }
        Ok(match self.locate(point) {
            None => FieldSample {
                sigma: T::zero(),
                rgb: self.background,
                interp: None,
            },
            Some(cell) => {
                let (s, c) = self.interpolate_raw(&cell);
                FieldSample {
                    sigma: softplus(s),
                    rgb: c.map(sigmoid),
                    interp: Some(InterpWeights {
                        indices: self.corner_indices(cell.base),
                        weights: cell.weights(),
                    }),
                }
            }
        })
    }
}
