//! Recovers a haze-free voxel radiance field and per-image atmospheric
//! scattering parameters jointly from hazy multi-view images.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the bottom of this file pin the common instantiations.

pub mod error;
pub mod eval;
pub mod field;
pub mod gradcheck;
pub mod haze;
pub mod image;
pub mod io;
pub mod losses;
mod math;
pub mod optim;
pub mod scalar;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Real;

pub type VoxelGrid32 = field::VoxelGrid<f32>;
pub type VoxelGrid64 = field::VoxelGrid<f64>;
pub type AtmosphereParams32 = haze::AtmosphereParams<f32>;
pub type AtmosphereParams64 = haze::AtmosphereParams<f64>;
pub type GradBuffer32 = field::GradBuffer<f32>;
pub type GradBuffer64 = field::GradBuffer<f64>;
pub type RgbImage32 = image::Image<f32>;
pub type RgbImage64 = image::Image<f64>;
