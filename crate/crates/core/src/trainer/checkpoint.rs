//! `HZNF` container: magic, version, scalar width, then length-prefixed
//! little-endian fields in a fixed order.

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::error::{Error, Result};
use crate::field::VoxelGrid;
use crate::haze::AtmosphereParams;
use crate::optim::AdamState;
use crate::scalar::Real;

use super::config::TrainConfig;
use super::TrainState;

pub const MAGIC: &[u8; 4] = b"HZNF";
pub const VERSION: u32 = 1;

/// A resumable snapshot of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub config: TrainConfig,
    pub config_hash: [u8; 32],
    pub state: TrainState<T>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.0.extend_from_slice(b);
    }
    fn f64s(&mut self, vals: &[f64]) {
        self.u64(vals.len() as u64);
        for v in vals {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
    fn reals<T: Real>(&mut self, vals: &[T]) {
        self.u64(vals.len() as u64);
        for &v in vals {
            v.write_le(&mut self.0);
        }
    }
    fn adam<T: Real>(&mut self, s: &AdamState<T>) {
        self.u64(s.step_count);
        self.reals(&[s.beta1, s.beta2, s.eps]);
        self.reals(&s.m);
        self.reals(&s.v);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn len(&mut self, elem: usize) -> std::result::Result<usize, String> {
        let n = self.u64()?;
        let n = usize::try_from(n).map_err(|_| "length overflow".to_string())?;
        if n.saturating_mul(elem) > self.buf.len() - self.pos {
            return Err(format!("declared length {n} exceeds the file"));
        }
        Ok(n)
    }
    fn bytes(&mut self) -> std::result::Result<&'a [u8], String> {
        let n = self.len(1)?;
        self.take(n)
    }
    fn f64s(&mut self) -> std::result::Result<Vec<f64>, String> {
        let n = self.len(8)?;
        Ok(self
            .take(n * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    fn reals<T: Real>(&mut self) -> std::result::Result<Vec<T>, String> {
        let n = self.len(T::BYTES)?;
        Ok(self.take(n * T::BYTES)?.chunks_exact(T::BYTES).map(T::read_le).collect())
    }
    fn adam<T: Real>(&mut self) -> std::result::Result<AdamState<T>, String> {
        let step_count = self.u64()?;
        let c = self.reals::<T>()?;
        if c.len() != 3 {
            return Err("adam constants must have 3 entries".into());
        }
        let m = self.reals()?;
        let v: Vec<T> = self.reals()?;
        if m.len() != v.len() {
            return Err("adam moment lengths differ".into());
        }
        Ok(AdamState {
            m,
            v,
            step_count,
            beta1: c[0],
            beta2: c[1],
            eps: c[2],
        })
    }
}

fn vec3(v: &[f64]) -> std::result::Result<[f64; 3], String> {
    v.try_into().map_err(|_| "expected a 3-vector".to_string())
}

/// Scalar width recorded in a checkpoint header, without decoding the rest.
pub fn scalar_bits(path: &Path) -> Result<u32> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if buf.len() < 12 || &buf[..4] != MAGIC {
        return Err(Error::corrupt(path, "bad magic (not an HZNF checkpoint)"));
    }
    Ok(u32::from_le_bytes(buf[8..12].try_into().unwrap()))
}

impl<T: Real> Checkpoint<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION);
        w.u32(T::BITS);
        w.bytes(&serde_json::to_vec(&self.config).expect("config serializes"));
        w.bytes(&self.config_hash);
        w.u64(self.state.iteration);

        let grid = &self.state.grid;
        let (lo, hi) = grid.bbox();
        let res = grid.resolution();
        w.f64s(&res.map(|r| r as f64));
        w.f64s(&lo.map(|v| v.to_f64_lossless()));
        w.f64s(&hi.map(|v| v.to_f64_lossless()));
        w.f64s(&grid.background.map(|v| v.to_f64_lossless()));
        w.reals(&grid.density_raw);
        w.reals(grid.color_raw.as_flattened());
        w.reals(&self.state.atmosphere.beta_raw);
        w.reals(&self.state.atmosphere.a_raw);
        w.adam(&self.state.grid_adam);
        w.adam(&self.state.atmosphere_adam);

        let rng = &self.state.rng;
        w.bytes(&rng.get_seed());
        w.u64(rng.get_stream());
        w.0.extend_from_slice(&rng.get_word_pos().to_le_bytes());
        w.0
    }

    pub fn from_bytes(buf: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err("bad magic (not an HZNF checkpoint)".into());
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let bits = r.u32()?;
        if bits != T::BITS {
            return Err(format!("checkpoint stores {bits}-bit scalars, expected {}", T::BITS));
        }
        let config: TrainConfig =
            serde_json::from_slice(r.bytes()?).map_err(|e| format!("embedded config: {e}"))?;
        let config_hash: [u8; 32] = r
            .bytes()?
            .try_into()
            .map_err(|_| "config hash must be 32 bytes".to_string())?;
        if config.hash() != config_hash {
            return Err("config hash does not match the embedded config".into());
        }
        let iteration = r.u64()?;

        let res = vec3(&r.f64s()?)?.map(|v| v as usize);
        let lo = vec3(&r.f64s()?)?.map(T::lit);
        let hi = vec3(&r.f64s()?)?.map(T::lit);
        let bg = vec3(&r.f64s()?)?.map(T::lit);
        let mut grid = VoxelGrid::new(res, lo, hi, bg).map_err(|e| e.to_string())?;
        let density: Vec<T> = r.reals()?;
        let color: Vec<T> = r.reals()?;
        if density.len() != grid.num_voxels() || color.len() != 3 * grid.num_voxels() {
            return Err("grid arrays do not match the resolution".into());
        }
        grid.density_raw = density;
        grid.color_raw = color.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        let atmosphere = AtmosphereParams {
            beta_raw: r.reals()?,
            a_raw: r.reals()?,
        };
        if atmosphere.beta_raw.len() != atmosphere.a_raw.len() {
            return Err("atmosphere arrays differ in length".into());
        }
        let grid_adam = r.adam()?;
        let atmosphere_adam = r.adam()?;
        if grid_adam.len() != 4 * grid.num_voxels() || atmosphere_adam.len() != 2 * atmosphere.len() {
            return Err("optimizer state does not match the parameters".into());
        }

        let seed: [u8; 32] = r
            .bytes()?
            .try_into()
            .map_err(|_| "rng seed must be 32 bytes".to_string())?;
        let stream = r.u64()?;
        let word_pos = u128::from_le_bytes(r.take(16)?.try_into().unwrap());
        if r.pos != buf.len() {
            return Err("trailing bytes after checkpoint".into());
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(stream);
        rng.set_word_pos(word_pos);

        Ok(Self {
            config,
            config_hash,
            state: TrainState {
                grid,
                atmosphere,
                grid_adam,
                atmosphere_adam,
                iteration,
                rng,
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf).map_err(|reason| Error::corrupt(path, reason))
    }
}
