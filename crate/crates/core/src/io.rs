//! On-disk formats: 8-bit RGB PNG, little-endian PFM, JSON.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::image::{Image, Map};
use crate::scalar::Real;

/// Rounds each channel of a [0, 1] image to an 8-bit code.
pub fn to_rgb8<T: Real>(image: &Image<T>) -> Vec<u8> {
    image
        .values()
        .map(|v| (v.to_f64_lossless().clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}

pub fn write_png<T: Real>(path: &Path, image: &Image<T>) -> Result<()> {
    let bytes = to_rgb8(image);
    image::save_buffer_with_format(
        path,
        &bytes,
        image.width() as u32,
        image.height() as u32,
        image::ExtendedColorType::Rgb8,
        image::ImageFormat::Png,
    )
    .map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a PNG as raw 8-bit RGB: `(width, height, bytes)`.
pub fn read_png_rgb8(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .to_rgb8();
    Ok((img.width() as usize, img.height() as usize, img.into_raw()))
}

pub fn read_png<T: Real>(path: &Path) -> Result<Image<T>> {
    let (w, h, bytes) = read_png_rgb8(path)?;
    let scale = T::lit(255.0);
    Image::from_pixels(
        w,
        h,
        bytes
            .chunks_exact(3)
            .map(|p| [0, 1, 2].map(|c| T::from_u8(p[c]).unwrap() / scale))
            .collect(),
    )
}

fn pfm_bytes<const C: usize, T: Real>(image: &Image<T, C>) -> Vec<u8> {
    let tag = if C == 1 { "Pf" } else { "PF" };
    let mut out = format!("{tag}\n{} {}\n-1.0\n", image.width(), image.height()).into_bytes();
    // PFM stores scanlines bottom to top.
    for y in (0..image.height()).rev() {
        for x in 0..image.width() {
            for v in image.get(x, y) {
                out.extend_from_slice(&(v.to_f64_lossless() as f32).to_le_bytes());
            }
        }
    }
    out
}

/// Single-channel little-endian PFM (scale −1.0).
pub fn write_pfm<T: Real>(path: &Path, map: &Map<T>) -> Result<()> {
    fs::write(path, pfm_bytes(map)).map_err(|e| Error::io(path, e))
}

pub fn write_pfm_rgb<T: Real>(path: &Path, image: &Image<T>) -> Result<()> {
    fs::write(path, pfm_bytes(image)).map_err(|e| Error::io(path, e))
}

pub fn read_pfm<T: Real>(path: &Path) -> Result<Map<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |why: &str| Error::corrupt(path, why.to_string());
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated PFM header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ascii header"))?);
    }
    pos += 1;
    if fields[0] != "Pf" {
        return Err(bad("expected a single-channel Pf map"));
    }
    let w: usize = fields[1].parse().map_err(|_| bad("bad width"))?;
    let h: usize = fields[2].parse().map_err(|_| bad("bad height"))?;
    let scale: f64 = fields[3].parse().map_err(|_| bad("bad scale"))?;
    if scale >= 0.0 {
        return Err(bad("only little-endian PFM is supported"));
    }
    let body = bytes.get(pos..).unwrap_or_default();
    if body.len() != w * h * 4 {
        return Err(bad("PFM payload size mismatch"));
    }
    let mut map = Map::zeros(w, h);
    for (k, chunk) in body.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        let (x, row) = (k % w, k / w);
        map.set(x, h - 1 - row, [T::lit(v as f64)]);
    }
    Ok(map)
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<D: DeserializeOwned>(path: &Path) -> Result<D> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}
