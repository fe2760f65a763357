//! Explicit voxel-grid radiance field and its differentiable volume renderer.

mod camera;
mod grad;
mod grid;
mod render;

pub use camera::{Camera, Ray};
pub use grad::GradBuffer;
pub use grid::{DEFAULT_DENSITY_RAW, CellCoords, FieldSample, InterpWeights, VoxelGrid};
pub use render::{
    ray_adjoint, render_ray, render_ray_backward, render_rays_backward, render_subgrid, RayTape,
    RenderOutput, SampleAdjoint, SubgridRender, SubgridSpec, TapeSample,
};
