use crate::field::VoxelGrid;
use crate::math::Vec3;
use crate::scalar::Real;

/// Cotangent accumulator mirroring the grid raws and per-image atmosphere raws.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBuffer<T> {
    pub d_density_raw: Vec<T>,
    pub d_color_raw: Vec<Vec3<T>>,
    pub d_beta_raw: Vec<T>,
    pub d_a_raw: Vec<T>,
}

impl<T: Real> GradBuffer<T> {
    pub fn new(num_voxels: usize, num_images: usize) -> Self {
        Self {
            d_density_raw: vec![T::zero(); num_voxels],
            d_color_raw: vec![[T::zero(); 3]; num_voxels],
            d_beta_raw: vec![T::zero(); num_images],
            d_a_raw: vec![T::zero(); num_images],
        }
    }

    pub fn for_grid(grid: &VoxelGrid<T>, num_images: usize) -> Self {
        Self::new(grid.num_voxels(), num_images)
    }

    pub fn zero(&mut self) {
        self.d_density_raw.fill(T::zero());
        self.d_color_raw.fill([T::zero(); 3]);
        self.d_beta_raw.fill(T::zero());
        self.d_a_raw.fill(T::zero());
    }

    pub fn all_finite(&self) -> bool {
        self.d_density_raw.iter().all(|v| v.is_finite())
            && self.d_color_raw.iter().flatten().all(|v| v.is_finite())
            && self.d_beta_raw.iter().all(|v| v.is_finite())
            && self.d_a_raw.iter().all(|v| v.is_finite())
    }

    pub fn is_congruent(&self, grid: &VoxelGrid<T>) -> bool {
        self.d_density_raw.len() == grid.num_voxels() && self.d_color_raw.len() == grid.num_voxels()
    }
}
