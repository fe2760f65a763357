use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcpParams {
    pub omega: f64,
    pub patch: usize,
    pub t0: f64,
}

impl Default for DcpParams {
    fn default() -> Self {
        Self {
            omega: 0.95,
            patch: 15,
            t0: 0.1,
        }
    }
}

/// Windowed minimum of a per-pixel scalar, window clipped at the borders.
fn min_filter(values: &[f64], w: usize, h: usize, patch: usize) -> Vec<f64> {
    let r = patch / 2;
    let mut rows = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(r), (x + r).min(w - 1));
            rows[y * w + x] = values[y * w + x0..=y * w + x1].iter().copied().fold(f64::INFINITY, f64::min);
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(r), (y + r).min(h - 1));
        for x in 0..w {
            out[y * w + x] = (y0..=y1).map(|yy| rows[yy * w + x]).fold(f64::INFINITY, f64::min);
        }
    }
    out
}

fn dark_channel(image: &Image<f64>, scale: [f64; 3], patch: usize) -> Vec<f64> {
    let per_pixel: Vec<f64> = image
        .pixels()
        .iter()
        .map(|p| (0..3).map(|c| p[c] / scale[c]).fold(f64::INFINITY, f64::min))
        .collect();
    min_filter(&per_pixel, image.width(), image.height(), patch)
}

/// Airlight below this is treated as this when normalizing, so a channel that
/// is zero everywhere contributes a zero ratio rather than 0/0.
const AIRLIGHT_FLOOR: f64 = 1e-6;

/// Dark-channel-prior dehazing without transmission refinement.
pub fn dcp_dehaze(hazy: &Image<f64>, params: &DcpParams) -> Result<Image<f64>> {
    let (w, h) = (hazy.width(), hazy.height());
    if params.patch == 0 || w < params.patch || h < params.patch {
        return Err(Error::invalid(format!(
            "dark channel prior needs an image of at least {0}x{0} pixels",
            params.patch
        )));
    }
    if !hazy.all_finite() {
        return Err(Error::invalid("degenerate image: non-finite pixel values"));
    }
    if !(params.omega > 0.0 && params.omega <= 1.0 && params.t0 > 0.0 && params.t0 <= 1.0) {
        return Err(Error::invalid("dcp needs omega in (0, 1] and t0 in (0, 1]"));
    }
    let dark = dark_channel(hazy, [1.0; 3], params.patch);
    let n_top = (dark.len() / 1000).max(1);
    let mut order: Vec<usize> = (0..dark.len()).collect();
    order.sort_by(|&i, &j| dark[j].total_cmp(&dark[i]).then(i.cmp(&j)));
    let brightest = order[..n_top]
        .iter()
        .copied()
        .max_by(|&i, &j| {
            let s = |k: usize| hazy.pixels()[k].iter().sum::<f64>();
            s(i).total_cmp(&s(j)).then(j.cmp(&i))
        })
        .unwrap();
    let airlight = hazy.pixels()[brightest];
    let scale = airlight.map(|a| a.max(AIRLIGHT_FLOOR));
    let dark_norm = dark_channel(hazy, scale, params.patch);
    let data = hazy
        .pixels()
        .iter()
        .zip(&dark_norm)
        .map(|(p, &d)| {
            let t = (1.0 - params.omega * d).max(params.t0);
            [0, 1, 2].map(|c| ((p[c] - airlight[c]) / t + airlight[c]).clamp(0.0, 1.0))
        })
        .collect();
    Image::from_pixels(w, h, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_red_passes_through() {
        let img = Image::from_fn(20, 20, |x, y| [0.2 + 0.03 * x as f64 + 0.001 * y as f64, 0.0, 0.0]);
        let out = dcp_dehaze(&img, &DcpParams::default()).unwrap();
        // zero dark channel means t = 1; (p - a) + a only loses a rounding step
        assert!(out.values().zip(img.values()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn white_is_clamped() {
        let img = Image::filled(16, 16, [1.0; 3]);
        let out = dcp_dehaze(&img, &DcpParams::default()).unwrap();
        assert!(out.values().all(|v| v == 1.0));
    }

    #[test]
    fn min_filter_by_hand() {
        let v = [5.0, 4.0, 9.0, 1.0, 7.0, 8.0, 3.0, 6.0, 2.0];
        let out = min_filter(&v, 3, 3, 3);
        assert_eq!(out, vec![1.0, 1.0, 4.0, 1.0, 1.0, 2.0, 1.0, 1.0, 2.0]);
    }

    #[test]
    fn too_small_errors() {
        assert!(dcp_dehaze(&Image::filled(10, 20, [0.5; 3]), &DcpParams::default()).is_err());
    }
}
