//! Binary trajectory checkpoints.
//!
//! Layout (little-endian): `b"TFLAB"`, version `u32`, `d u32`, `M u32`,
//! Galerkin radius `N f64` (NaN when absent), `δ f64`, `ν f64`, `t f64`,
//! seed `u64`, stream `u64`, counter `u128`, then one `(re, im)` pair of
//! `f64` per component for every retained mode in grid enumeration order.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::dynamics::{Flow, SpdeState};
use crate::error::{Error, Result};
use crate::field::C64;
use crate::grid::ModeGrid;
use crate::rng::RngStream;

pub const MAGIC: &[u8; 5] = b"TFLAB";
pub const VERSION: u32 = 1;

pub fn encode<F: Flow>(state: &SpdeState<F>) -> Vec<u8> {
    let grid = state.field.grid();
    let comps = state.field.components();
    let mut out = Vec::with_capacity(64 + grid.modes().len() * comps.len() * 16);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(grid.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.m() as u32).to_le_bytes());
    out.extend_from_slice(&state.galerkin.unwrap_or(f64::NAN).to_le_bytes());
    for v in [state.delta, state.nu, state.time] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&state.rng.seed().to_le_bytes());
    out.extend_from_slice(&state.rng.stream().to_le_bytes());
    out.extend_from_slice(&state.rng.counter().to_le_bytes());
    for &idx in grid.modes() {
        for c in comps {
            out.extend_from_slice(&c[idx].re.to_le_bytes());
            out.extend_from_slice(&c[idx].im.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let end = self.pos + N;
        let bytes = self
            .buf
            .get(self.pos..end)
            .ok_or_else(|| Error::CorruptCheckpoint(format!("file ends inside {what}")))?;
        self.pos = end;
        Ok(bytes.try_into().expect("length checked"))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(what)?))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(what)?))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(what)?))
    }
}

pub fn decode<F: Flow>(bytes: &[u8]) -> Result<SpdeState<F>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic: [u8; 5] = r.take("magic")?;
    if &magic != MAGIC {
        return Err(Error::CorruptCheckpoint("bad magic".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: VERSION,
        });
    }
    let dim = r.u32("dimension")? as usize;
    let m = r.u32("grid size")? as usize;
    let galerkin = r.f64("galerkin radius")?;
    let delta = r.f64("delta")?;
    let nu = r.f64("viscosity")?;
    let time = r.f64("time")?;
    let seed = r.u64("seed")?;
    let stream = r.u64("stream")?;
    let counter = u128::from_le_bytes(r.take("counter")?);

    if !(dim == 2 || dim == 3) {
        return Err(Error::CorruptCheckpoint(format!("dimension {dim}")));
    }
    let ncomp = F::component_count(dim);
    if dim == 3 && ncomp == 1 {
        return Err(Error::CorruptCheckpoint("3D checkpoint read as a 2D vorticity".into()));
    }
    let grid = Arc::new(ModeGrid::new(dim, m).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?);
    let expected = r.pos + grid.modes().len() * ncomp * 16;
    if bytes.len() != expected {
        return Err(Error::CorruptCheckpoint(format!(
            "payload is {} bytes, shape d={dim} M={m} needs {}",
            bytes.len().saturating_sub(r.pos),
            expected - r.pos
        )));
    }
    let mut comps = vec![vec![C64::new(0.0, 0.0); grid.len()]; ncomp];
    for &idx in grid.modes() {
        for c in comps.iter_mut() {
            let re = r.f64("coefficients")?;
            let im = r.f64("coefficients")?;
            c[idx] = C64::new(re, im);
        }
    }
    let field = F::from_components(Arc::clone(&grid), comps);
    if !field.is_finite() {
        return Err(Error::CorruptCheckpoint("non-finite coefficients".into()));
    }
    Ok(SpdeState {
        field,
        time,
        nu,
        delta,
        galerkin: (!galerkin.is_nan()).then_some(galerkin),
        rng: RngStream::at(seed, stream, counter),
    })
}

pub fn save_checkpoint<F: Flow>(state: &SpdeState<F>, path: &Path) -> Result<()> {
    fs::write(path, encode(state)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<F: Flow>(path: &Path) -> Result<SpdeState<F>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| e.context(format!("loading {}", path.display())))
}
