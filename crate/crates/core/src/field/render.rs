//! Stratified volume rendering along rays and its exact reverse-mode adjoint.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{Camera, CellCoords, GradBuffer, Ray, VoxelGrid};
use crate::image::{Image, Map};
use crate::math::{self, Vec3};
use crate::scalar::{sigmoid, softplus, Real};

/// Per-pixel result of compositing one ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOutput<T> {
    pub color: Vec3<T>,
    /// Expected depth, completed with `far` for the unoccupied remainder.
    pub depth: T,
    /// Accumulated weight `W = Σ w_i`.
    pub opacity: T,
}

/// Forward state of one in-box sample, kept for the backward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TapeSample<T> {
    pub index: usize,
    pub depth: T,
    pub delta: T,
    pub cell: CellCoords<T>,
    /// Interpolated raw density before softplus.
    pub density_raw: T,
    pub sigma: T,
    pub rgb: Vec3<T>,
    /// Transmittance `T_i` reaching this sample.
    pub transmittance: T,
    pub alpha: T,
}

impl<T: Real> TapeSample<T> {
    #[inline]
    pub fn weight(&self) -> T {
        self.transmittance * self.alpha
    }
}

/// Cached forward pass of [`render_ray`]. Samples outside the box are not
/// recorded: they carry zero density and therefore zero weight and gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct RayTape<T> {
    pub resolution: [usize; 3],
    pub n_samples: usize,
    pub samples: Vec<TapeSample<T>>,
    pub background: Vec3<T>,
    pub far: T,
    pub final_transmittance: T,
}

/// Cotangents of the interpolated raw values at one recorded sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleAdjoint<T> {
    pub d_density_raw: T,
    pub d_color_raw: Vec3<T>,
}

fn ray_box_interval<T: Real>(ray: &Ray<T>, lo: Vec3<T>, hi: Vec3<T>) -> Option<(T, T)> {
    let mut t0 = T::neg_infinity();
    let mut t1 = T::infinity();
    for k in 0..3 {
        let d = ray.direction[k];
        if d == T::zero() {
            if ray.origin[k] < lo[k] || ray.origin[k] > hi[k] {
                return None;
            }
            continue;
        }
        let a = (lo[k] - ray.origin[k]) / d;
        let b = (hi[k] - ray.origin[k]) / d;
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
    }
    (t0 <= t1).then_some((t0, t1))
}

/// Renders one ray with `n_samples` stratified samples on `[near, far]`.
///
/// Without `jitter` the samples sit at bin midpoints; with it each sample is
/// drawn uniformly inside its bin.
pub fn render_ray<T: Real>(
    grid: &VoxelGrid<T>,
    ray: &Ray<T>,
    n_samples: usize,
    jitter: Option<&mut dyn RngCore>,
) -> Result<(RenderOutput<T>, RayTape<T>)> {
    if n_samples < 2 {
        return Err(Error::InsufficientSamples(n_samples));
    }
    let n_t = T::from_usize(n_samples).unwrap();
    let bin = (ray.far - ray.near) / n_t;
    let half = T::lit(0.5);
    let depths: Vec<T> = match jitter {
        None => (0..n_samples)
            .map(|i| ray.near + (T::from_usize(i).unwrap() + half) * bin)
            .collect(),
        Some(rng) => (0..n_samples)
            .map(|i| {
                let u: f64 = rng.gen();
                ray.near + (T::from_usize(i).unwrap() + T::lit(u)) * bin
            })
            .collect(),
    };

    let (lo, hi) = grid.bbox();
    // Slightly widened so boundary samples are still decided by `locate`.
    let margin = bin;
    let (enter, exit) = match ray_box_interval(ray, lo, hi) {
        Some((a, b)) => (a - margin, b + margin),
        None => (T::infinity(), T::neg_infinity()),
    };

    let mut samples = Vec::new();
    let mut trans = T::one();
    let mut color = [T::zero(); 3];
    let mut depth_acc = T::zero();
    let mut weight_sum = T::zero();
    for i in 0..n_samples {
        let d = depths[i];
        if d < enter || d > exit {
            continue;
        }
        let p = ray.at(d);
        let Some(cell) = grid.locate(p) else { continue };
        let delta = if i + 1 < n_samples {
            depths[i + 1] - d
        } else {
            ray.far - d
        };
        let (s, craw) = grid.interpolate_raw(&cell);
        let sigma = softplus(s);
        let rgb = craw.map(sigmoid);
        let tau = sigma * delta;
        let alpha = -(-tau).exp_m1();
        let w = trans * alpha;
        for c in 0..3 {
            color[c] += w * rgb[c];
        }
        depth_acc += w * d;
        weight_sum += w;
        samples.push(TapeSample {
            index: i,
            depth: d,
            delta,
            cell,
            density_raw: s,
            sigma,
            rgb,
            transmittance: trans,
            alpha,
        });
        trans = trans * (-tau).exp();
    }
    let rest = T::one() - weight_sum;
    let bg = grid.background;
    let out = RenderOutput {
        color: [
            color[0] + rest * bg[0],
            color[1] + rest * bg[1],
            color[2] + rest * bg[2],
        ],
        depth: depth_acc + rest * ray.far,
        opacity: weight_sum,
    };
    let tape = RayTape {
        resolution: grid.resolution(),
        n_samples,
        samples,
        background: bg,
        far: ray.far,
        final_transmittance: trans,
    };
    Ok((out, tape))
}

/// Cotangents of the interpolated raw density/color at every recorded sample
/// for the scalar `d_color · color + d_depth · depth + d_opacity · opacity`.
pub fn ray_adjoint<T: Real>(
    tape: &RayTape<T>,
    d_color: Vec3<T>,
    d_depth: T,
    d_opacity: T,
) -> Vec<SampleAdjoint<T>> {
    let bg_value = math::dot(d_color, tape.background) + d_depth * tape.far;
    let mut out = vec![
        SampleAdjoint {
            d_density_raw: T::zero(),
            d_color_raw: [T::zero(); 3],
        };
        tape.samples.len()
    ];
    // Σ_{i>k} w_i e_i, accumulated back to front.
    let mut suffix = T::zero();
    for (k, smp) in tape.samples.iter().enumerate().rev() {
        let w = smp.weight();
        let e = math::dot(d_color, smp.rgb) + d_depth * smp.depth + d_opacity - bg_value;
        let trans_next = smp.transmittance * (T::one() - smp.alpha);
        let d_tau = trans_next * e - suffix;
        suffix += w * e;
        let d_sigma = d_tau * smp.delta;
        out[k] = SampleAdjoint {
            d_density_raw: d_sigma * sigmoid(smp.density_raw),
            d_color_raw: [0, 1, 2].map(|c| w * d_color[c] * smp.rgb[c] * (T::one() - smp.rgb[c])),
        };
    }
    out
}

#[inline]
fn scatter<T: Real>(grid: &VoxelGrid<T>, tape: &RayTape<T>, adj: &[SampleAdjoint<T>], grads: &mut GradBuffer<T>) {
    for (smp, a) in tape.samples.iter().zip(adj) {
        let idx = grid.corner_indices(smp.cell.base);
        let w = smp.cell.weights();
        for k in 0..8 {
            let i = idx[k];
            grads.d_density_raw[i] += w[k] * a.d_density_raw;
            let g = &mut grads.d_color_raw[i];
            g[0] += w[k] * a.d_color_raw[0];
            g[1] += w[k] * a.d_color_raw[1];
            g[2] += w[k] * a.d_color_raw[2];
        }
    }
}

fn check_backward_shapes<T: Real>(grid: &VoxelGrid<T>, tape: &RayTape<T>, grads: &GradBuffer<T>) -> Result<()> {
    if tape.resolution != grid.resolution() {
        return Err(Error::shape(format!(
            "tape recorded for grid {:?}, got {:?}",
            tape.resolution,
            grid.resolution()
        )));
    }
    if !grads.is_congruent(grid) {
        return Err(Error::shape("gradient buffer is not congruent with the grid"));
    }
    Ok(())
}

/// Accumulates the gradient of one ray's cotangent-weighted output into `grads`.
pub fn render_ray_backward<T: Real>(
    grid: &VoxelGrid<T>,
    tape: &RayTape<T>,
    d_color: Vec3<T>,
    d_depth: T,
    d_opacity: T,
    grads: &mut GradBuffer<T>,
) -> Result<()> {
    check_backward_shapes(grid, tape, grads)?;
    let adj = ray_adjoint(tape, d_color, d_depth, d_opacity);
    scatter(grid, tape, &adj, grads);
    Ok(())
}

/// Batched backward: per-ray adjoints in parallel, then a scatter in ray
/// order so the accumulated sums do not depend on the worker count.
pub fn render_rays_backward<T: Real>(
    grid: &VoxelGrid<T>,
    tapes: &[RayTape<T>],
    cotangents: &[(Vec3<T>, T, T)],
    grads: &mut GradBuffer<T>,
) -> Result<()> {
    if tapes.len() != cotangents.len() {
        return Err(Error::shape("one cotangent per tape required"));
    }
    for tape in tapes {
        check_backward_shapes(grid, tape, grads)?;
    }
    let adjoints: Vec<Vec<SampleAdjoint<T>>> = tapes
        .par_iter()
        .zip(cotangents.par_iter())
        .map(|(tape, &(dc, dd, dop))| ray_adjoint(tape, dc, dd, dop))
        .collect();
    for (tape, adj) in tapes.iter().zip(&adjoints) {
        scatter(grid, tape, adj, grads);
    }
    Ok(())
}

/// Regular pixel lattice `(offset_x + j·stride, offset_y + i·stride)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubgridSpec {
    pub offset_x: usize,
    pub offset_y: usize,
    pub stride: usize,
    pub cols: usize,
    pub rows: usize,
}

impl SubgridSpec {
    pub fn full(width: usize, height: usize) -> Self {
        Self {
            offset_x: 0,
            offset_y: 0,
            stride: 1,
            cols: width,
            rows: height,
        }
    }

    /// Every pixel reachable from the offset with the given stride.
    pub fn lattice(width: usize, height: usize, stride: usize, offset_x: usize, offset_y: usize) -> Result<Self> {
        if stride == 0 || offset_x >= width || offset_y >= height {
            return Err(Error::invalid("lattice offset/stride out of image bounds"));
        }
        Ok(Self {
            offset_x,
            offset_y,
            stride,
            cols: (width - offset_x).div_ceil(stride),
            rows: (height - offset_y).div_ceil(stride),
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Image pixel of lattice cell `(row, col)`.
    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> (usize, usize) {
        (self.offset_x + col * self.stride, self.offset_y + row * self.stride)
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.stride >= 1
            && self.rows >= 1
            && self.cols >= 1
            && self.offset_x + (self.cols - 1) * self.stride < width
            && self.offset_y + (self.rows - 1) * self.stride < height
    }

    /// Gathers the lattice out of a full-resolution raster.
    pub fn gather<P: Copy, const C: usize>(&self, image: &Image<P, C>) -> Result<Image<P, C>> {
        if !self.fits(image.width(), image.height()) {
            return Err(Error::invalid("lattice does not fit inside the image"));
        }
        Ok(Image::from_fn(self.cols, self.rows, |c, r| {
            let (x, y) = self.pixel(r, c);
            image.get(x, y)
        }))
    }
}

/// Rendered lattice laid out as `rows × cols` rasters.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgridRender<T> {
    pub color: Image<T>,
    pub depth: Map<T>,
    pub opacity: Map<T>,
}

/// Renders one ray per lattice pixel through its center. With `jitter_seed`,
/// ray `k` (row-major) draws its jitter from its own ChaCha stream `k`.
pub fn render_subgrid<T: Real>(
    grid: &VoxelGrid<T>,
    camera: &Camera,
    pixels: &SubgridSpec,
    n_samples: usize,
    jitter_seed: Option<u64>,
) -> Result<(SubgridRender<T>, Vec<RayTape<T>>)> {
    if !pixels.fits(camera.width, camera.height) {
        return Err(Error::invalid(format!(
            "lattice {pixels:?} out of bounds for a {}x{} image",
            camera.width, camera.height
        )));
    }
    if n_samples < 2 {
        return Err(Error::InsufficientSamples(n_samples));
    }
    let results: Vec<(RenderOutput<T>, RayTape<T>)> = (0..pixels.len())
        .into_par_iter()
        .map(|k| {
            let (px, py) = pixels.pixel(k / pixels.cols, k % pixels.cols);
            let ray = camera.pixel_ray::<T>(px, py);
            match jitter_seed {
                Some(seed) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(k as u64);
                    render_ray(grid, &ray, n_samples, Some(&mut rng))
                }
                None => render_ray(grid, &ray, n_samples, None),
            }
        })
        .collect::<Result<_>>()?;
    let mut color = Vec::with_capacity(results.len());
    let mut depth = Vec::with_capacity(results.len());
    let mut opacity = Vec::with_capacity(results.len());
    let mut tapes = Vec::with_capacity(results.len());
    for (out, tape) in results {
        color.push(out.color);
        depth.push([out.depth]);
        opacity.push([out.opacity]);
        tapes.push(tape);
    }
    let (w, h) = (pixels.cols, pixels.rows);
    Ok((
        SubgridRender {
            color: Image::from_pixels(w, h, color)?,
            depth: Image::from_pixels(w, h, depth)?,
            opacity: Image::from_pixels(w, h, opacity)?,
        },
        tapes,
    ))
}
