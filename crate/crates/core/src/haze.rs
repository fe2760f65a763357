//! Atmospheric scattering model `I = J·t + A·(1 − t)`, `t = exp(−β·d)`:
//! forward hazing, inversion, adjoints, 8-bit quantization and the per-image
//! atmosphere parameters.

use crate::error::{Error, Result};
use crate::image::{Image, Map};
use crate::scalar::{logit, sigmoid, softplus, softplus_inverse, Real};

/// Upper bound of the airlight mapping `A = A_MAX · sigmoid(a_raw)`.
pub const A_MAX: f64 = 1.5;

/// Default transmission floor used when inverting the model.
pub const DEFAULT_T_MIN: f64 = 1e-3;

/// Per-image raw atmosphere parameters.
///
/// `β_i = softplus(beta_raw_i) > 0` and `A_i = 1.5 · sigmoid(a_raw_i) ∈ (0, 1.5)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AtmosphereParams<T> {
    pub beta_raw: Vec<T>,
    pub a_raw: Vec<T>,
}

impl<T: Real> AtmosphereParams<T> {
    /// `n` images all initialised to the given physical values.
    pub fn uniform(n: usize, beta: f64, airlight: f64) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::invalid("beta must be positive"));
        }
        if !(airlight > 0.0 && airlight < A_MAX) {
            return Err(Error::invalid("A must lie in (0, 1.5)"));
        }
        Ok(Self {
            beta_raw: vec![T::lit(softplus_inverse(beta)); n],
            a_raw: vec![T::lit(logit(airlight / A_MAX)); n],
        })
    }

    pub fn len(&self) -> usize {
        self.beta_raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta_raw.is_empty()
    }

    #[inline]
    pub fn beta(&self, i: usize) -> T {
        softplus(self.beta_raw[i])
    }

    #[inline]
    pub fn airlight(&self, i: usize) -> T {
        T::lit(A_MAX) * sigmoid(self.a_raw[i])
    }

    pub fn betas(&self) -> Vec<T> {
        (0..self.len()).map(|i| self.beta(i)).collect()
    }

    pub fn airlights(&self) -> Vec<T> {
        (0..self.len()).map(|i| self.airlight(i)).collect()
    }

    /// Chains physical-parameter cotangents of image `i` to its raw values.
    #[inline]
    pub fn raw_cotangents(&self, i: usize, d_beta: T, d_airlight: T) -> (T, T) {
        let sb = sigmoid(self.beta_raw[i]);
        let sa = sigmoid(self.a_raw[i]);
        (d_beta * sb, d_airlight * T::lit(A_MAX) * sa * (T::one() - sa))
    }
}

/// `t = exp(−β·depth)`.
pub fn transmission<T: Real>(depth: T, beta: T) -> Result<T> {
    if !(depth >= T::zero()) {
        return Err(Error::invalid("depth must be non-negative"));
    }
    if !(beta >= T::zero()) {
        return Err(Error::invalid("beta must be non-negative"));
    }
    Ok((-beta * depth).exp())
}

fn check_depths<T: Real>(depth: &Map<T>) -> Result<()> {
    if depth.values().all(|d| d >= T::zero()) {
        Ok(())
    } else {
        Err(Error::invalid("depth must be non-negative"))
    }
}

/// Hazes a clean image. Output is not clamped.
pub fn apply_asm<T: Real>(clean: &Image<T>, depth: &Map<T>, beta: T, airlight: T) -> Result<Image<T>> {
    clean.check_shape(depth, "apply_asm clean vs depth")?;
    check_depths(depth)?;
    let pixels = clean
        .pixels()
        .iter()
        .zip(depth.pixels())
        .map(|(j, &[d])| {
            let t = (-beta * d).exp();
            let air = airlight * (T::one() - t);
            [j[0] * t + air, j[1] * t + air, j[2] * t + air]
        })
        .collect();
    Image::from_pixels(clean.width(), clean.height(), pixels)
}

/// `J = (I − A(1 − t)) / max(t, t_min)`.
pub fn invert_asm<T: Real>(hazy: &Image<T>, depth: &Map<T>, beta: T, airlight: T, t_min: T) -> Result<Image<T>> {
    if !(t_min > T::zero()) {
        return Err(Error::invalid("t_min must be positive"));
    }
    hazy.check_shape(depth, "invert_asm hazy vs depth")?;
    check_depths(depth)?;
    let pixels = hazy
        .pixels()
        .iter()
        .zip(depth.pixels())
        .map(|(i, &[d])| {
            let t = (-beta * d).exp();
            let air = airlight * (T::one() - t);
            let denom = t.max(t_min);
            [(i[0] - air) / denom, (i[1] - air) / denom, (i[2] - air) / denom]
        })
        .collect();
    Image::from_pixels(hazy.width(), hazy.height(), pixels)
}

/// Adjoints of [`apply_asm`] with respect to all four inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct AsmGrads<T> {
    pub d_clean: Image<T>,
    pub d_depth: Map<T>,
    pub d_beta: T,
    pub d_airlight: T,
}

pub fn asm_backward<T: Real>(
    clean: &Image<T>,
    depth: &Map<T>,
    beta: T,
    airlight: T,
    d_hazy: &Image<T>,
) -> Result<AsmGrads<T>> {
    clean.check_shape(depth, "asm_backward clean vs depth")?;
    clean.check_shape(d_hazy, "asm_backward clean vs cotangent")?;
    let n = clean.len();
    let mut d_clean = Vec::with_capacity(n);
    let mut d_depth = Vec::with_capacity(n);
    let mut d_beta = T::zero();
    let mut d_airlight = T::zero();
    for ((j, &[d]), g) in clean.pixels().iter().zip(depth.pixels()).zip(d_hazy.pixels()) {
        let t = (-beta * d).exp();
        d_clean.push([g[0] * t, g[1] * t, g[2] * t]);
        let mut haze_pull = T::zero();
        for c in 0..3 {
            d_airlight += g[c] * (T::one() - t);
            haze_pull += g[c] * (airlight - j[c]);
        }
        d_beta += haze_pull * d * t;
        d_depth.push([haze_pull * beta * t]);
    }
    Ok(AsmGrads {
        d_clean: Image::from_pixels(clean.width(), clean.height(), d_clean)?,
        d_depth: Image::from_pixels(clean.width(), clean.height(), d_depth)?,
        d_beta,
        d_airlight,
    })
}

/// A quantized image together with each value's reconstruction interval.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedImage<T> {
    pub values: Image<T>,
    pub lo: Image<T>,
    pub hi: Image<T>,
    pub levels: u32,
}

impl<T: Real> QuantizedImage<T> {
    /// Interval around already-quantized `values`.
    pub fn from_values(values: Image<T>, levels: u32) -> Result<Self> {
        if levels < 2 {
            return Err(Error::invalid("quantization needs at least 2 levels"));
        }
        let half = T::one() / (T::lit(2.0) * T::from_u32(levels - 1).unwrap());
        let lo = values.map(|p| p.map(|v| (v - half).max(T::zero())));
        let hi = values.map(|p| p.map(|v| (v + half).min(T::one())));
        Ok(Self {
            values,
            lo,
            hi,
            levels,
        })
    }

    /// From 8-bit RGB codes (`levels = 256`).
    pub fn from_codes(width: usize, height: usize, rgb: &[u8]) -> Result<Self> {
        if rgb.len() != width * height * 3 {
            return Err(Error::shape("rgb byte buffer does not match image size"));
        }
        let scale = T::lit(255.0);
        let values = Image::from_pixels(
            width,
            height,
            rgb.chunks_exact(3)
                .map(|p| [0, 1, 2].map(|c| T::from_u8(p[c]).unwrap() / scale))
                .collect(),
        )?;
        Self::from_values(values, 256)
    }

    pub fn width(&self) -> usize {
        self.values.width()
    }

    pub fn height(&self) -> usize {
        self.values.height()
    }

    /// Integer codes `k` with `value = k / (levels − 1)`.
    pub fn codes(&self) -> Vec<u32> {
        let top = T::from_u32(self.levels - 1).unwrap();
        self.values
            .values()
            .map(|v| (v * top).round().to_u32().unwrap())
            .collect()
    }

    /// Gathers a pixel lattice of values and intervals.
    pub fn gather(&self, lattice: &crate::field::SubgridSpec) -> Result<Self> {
        Ok(Self {
            values: lattice.gather(&self.values)?,
            lo: lattice.gather(&self.lo)?,
            hi: lattice.gather(&self.hi)?,
            levels: self.levels,
        })
    }
}

/// Clamps to [0, 1] and rounds each channel to the nearest `k / (levels − 1)`.
pub fn quantize<T: Real>(image: &Image<T>, levels: u32) -> Result<QuantizedImage<T>> {
    if levels < 2 {
        return Err(Error::invalid("quantization needs at least 2 levels"));
    }
    let top = T::from_u32(levels - 1).unwrap();
    let values = image.map(|p| p.map(|v| (v.max(T::zero()).min(T::one()) * top).round() / top));
    QuantizedImage::from_values(values, levels)
}
