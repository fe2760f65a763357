use crate::error::{Error, Result};
use crate::math::{self, Vec3};
use crate::scalar::Real;

/// Pinhole camera with an OpenCV-style frame: +x right, +y down, +z forward.
///
/// `cam_to_world` is a row-major 3×4 rigid transform whose rotation columns
/// are the camera axes expressed in world coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    pub principal_point: [f64; 2],
    pub cam_to_world: [[f64; 4]; 3],
    pub near: f64,
    pub far: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray<T> {
    pub origin: Vec3<T>,
    pub direction: Vec3<T>,
    pub near: T,
    pub far: T,
}

impl<T: Real> Ray<T> {
    pub fn new(origin: Vec3<T>, direction: Vec3<T>, near: T, far: T) -> Result<Self> {
        let len = math::norm(direction);
        if !(len.is_finite() && (len - T::one()).abs() <= T::lit(1e-6)) {
            return Err(Error::invalid("ray direction must be unit length"));
        }
        if !(near < far) {
            return Err(Error::invalid("ray near must be below far"));
        }
        Ok(Self {
            origin,
            direction,
            near,
            far,
        })
    }

    #[inline]
    pub fn at(&self, t: T) -> Vec3<T> {
        math::madd(self.origin, self.direction, t)
    }
}

impl Camera {
    /// Builds a camera looking from `eye` at `target`, with `up` resolving roll.
    #[allow(clippy::too_many_arguments)]
    pub fn look_at(
        eye: [f64; 3],
        target: [f64; 3],
        up: [f64; 3],
        width: usize,
        height: usize,
        focal: f64,
        near: f64,
        far: f64,
    ) -> Result<Self> {
        let forward = math::normalize(math::sub(target, eye));
        let right = math::cross(forward, up);
        if math::norm(right) < 1e-9 {
            return Err(Error::invalid("look-at up vector is parallel to the view axis"));
        }
        let right = math::normalize(right);
        let down = math::cross(forward, right);
        let mut m = [[0.0; 4]; 3];
        for r in 0..3 {
            m[r] = [right[r], down[r], forward[r], eye[r]];
        }
        let cam = Self {
            width,
            height,
            focal,
            principal_point: [width as f64 / 2.0, height as f64 / 2.0],
            cam_to_world: m,
            near,
            far,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn origin(&self) -> [f64; 3] {
        [
            self.cam_to_world[0][3],
            self.cam_to_world[1][3],
            self.cam_to_world[2][3],
        ]
    }

    pub fn axis(&self, col: usize) -> [f64; 3] {
        [
            self.cam_to_world[0][col],
            self.cam_to_world[1][col],
            self.cam_to_world[2][col],
        ]
    }

    pub fn forward(&self) -> [f64; 3] {
        self.axis(2)
    }

    pub fn rotation_determinant(&self) -> f64 {
        let r = |i: usize, j: usize| self.cam_to_world[i][j];
        r(0, 0) * (r(1, 1) * r(2, 2) - r(1, 2) * r(2, 1))
            - r(0, 1) * (r(1, 0) * r(2, 2) - r(1, 2) * r(2, 0))
            + r(0, 2) * (r(1, 0) * r(2, 1) - r(1, 1) * r(2, 0))
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("camera image size must be positive"));
        }
        if !(self.focal > 0.0 && self.focal.is_finite()) {
            return Err(Error::invalid("camera focal length must be positive"));
        }
        if !(0.0 < self.near && self.near < self.far && self.far.is_finite()) {
            return Err(Error::invalid("camera needs 0 < near < far"));
        }
        for i in 0..3 {
            for j in 0..3 {
                let d = math::dot(self.axis(i), self.axis(j));
                let expect = if i == j { 1.0 } else { 0.0 };
                if (d - expect).abs() > 1e-6 {
                    return Err(Error::invalid("camera rotation is not orthonormal"));
                }
            }
        }
        if (self.rotation_determinant() - 1.0).abs() > 1e-6 {
            return Err(Error::invalid("camera rotation must have determinant +1"));
        }
        Ok(())
    }

    /// World-space unit direction through continuous pixel coordinates `(u, v)`.
    pub fn direction_through(&self, u: f64, v: f64) -> [f64; 3] {
        let local = [
            (u - self.principal_point[0]) / self.focal,
            (v - self.principal_point[1]) / self.focal,
            1.0,
        ];
        let mut d = [0.0; 3];
        for (r, out) in d.iter_mut().enumerate() {
            *out = self.cam_to_world[r][0] * local[0]
                + self.cam_to_world[r][1] * local[1]
                + self.cam_to_world[r][2] * local[2];
        }
        math::normalize(d)
    }

    /// Ray through the center of pixel `(px, py)`.
    pub fn pixel_ray<T: Real>(&self, px: usize, py: usize) -> Ray<T> {
        let d = self.direction_through(px as f64 + 0.5, py as f64 + 0.5);
        Ray {
            origin: math::cast(self.origin()),
            direction: math::cast(d),
            near: T::lit(self.near),
            far: T::lit(self.far),
        }
    }
}
