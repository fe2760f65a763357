//! Row-major pixel rasters used for images, depth maps and pixel lattices.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A `height × width` raster with `C` interleaved channels per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T, const C: usize = 3> {
    width: usize,
    height: usize,
    data: Vec<[T; C]>,
}

/// Single-channel raster (depth, transmission, opacity).
pub type Map<T> = Image<T, 1>;

impl<T: Copy, const C: usize> Image<T, C> {
    pub fn filled(width: usize, height: usize, value: [T; C]) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_pixels(width: usize, height: usize, data: Vec<[T; C]>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::shape(format!(
                "{} pixels for a {width}x{height} raster",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [T; C]) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn pixels(&self) -> &[[T; C]] {
        &self.data
    }

    #[inline]
    pub fn pixels_mut(&mut self) -> &mut [[T; C]] {
        &mut self.data
    }

    pub fn into_pixels(self) -> Vec<[T; C]> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [T; C] {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: [T; C]) {
        self.data[y * self.width + x] = value;
    }

    pub fn same_shape<U, const D: usize>(&self, other: &Image<U, D>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn check_shape<U, const D: usize>(&self, other: &Image<U, D>, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape(format!(
                "{what}: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }

    pub fn map<U: Copy, const D: usize>(&self, f: impl Fn([T; C]) -> [U; D]) -> Image<U, D> {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&p| f(p)).collect(),
        }
    }

    /// Iterates channel values in row-major, channel-interleaved order.
    pub fn values(&self) -> impl Iterator<Item = T> + '_ {
        self.data.iter().flat_map(|p| p.iter().copied())
    }
}

impl<T: Real, const C: usize> Image<T, C> {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, [T::zero(); C])
    }

    pub fn clamp01(&self) -> Self {
        self.map(|p| p.map(|v| v.max(T::zero()).min(T::one())))
    }

    pub fn cast<U: Real>(&self) -> Image<U, C> {
        self.map(|p| p.map(|v| U::lit(v.to_f64_lossless())))
    }

    pub fn all_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }
}

impl<T: Copy> Map<T> {
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x][0]
    }
}
