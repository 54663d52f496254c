//! Multi-dimensional FFTs over a [`ModeGrid`] layout.
//!
//! `to_physical` evaluates `f(x_j) = Σ_n f̂(n) e^{i n·x_j}` on the collocation
//! points `x_j = 2π j / m`; `to_spectral` is its exact inverse (scaled by
//! `1/m^d`).

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::field::C64;
use crate::grid::ModeGrid;

pub struct Transform {
    dim: usize,
    m: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<C64>,
    tmp: Vec<C64>,
}

impl std::fmt::Debug for Transform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Transform")
            .field("dim", &self.dim)
            .field("m", &self.m)
            .finish()
    }
}

#[derive(Clone, Copy)]
enum Direction {
    Forward,
    Inverse,
}

impl Transform {
    pub fn new(grid: &ModeGrid) -> Self {
        let m = grid.m();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Transform {
            dim: grid.dim(),
            m,
            forward,
            inverse,
            scratch: vec![C64::default(); scratch_len],
            tmp: vec![C64::default(); grid.len()],
        }
    }

    /// In-place synthesis: spectral coefficients → physical samples.
    pub fn to_physical(&mut self, buf: &mut [C64]) {
        self.run(buf, Direction::Inverse);
    }

    /// In-place analysis: physical samples → spectral coefficients.
    pub fn to_spectral(&mut self, buf: &mut [C64]) {
        self.run(buf, Direction::Forward);
        let norm = 1.0 / buf.len() as f64;
        for v in buf.iter_mut() {
            *v *= norm;
        }
    }

    fn run(&mut self, buf: &mut [C64], dir: Direction) {
        let m = self.m;
        debug_assert_eq!(buf.len(), m.pow(self.dim as u32));
        let plan = match dir {
            Direction::Forward => Arc::clone(&self.forward),
            Direction::Inverse => Arc::clone(&self.inverse),
        };
        // contiguous (last) axis
        plan.process_with_scratch(buf, &mut self.scratch);
        match self.dim {
            2 => {
                transpose(buf, &mut self.tmp, m, m);
                plan.process_with_scratch(&mut self.tmp, &mut self.scratch);
                transpose(&self.tmp, buf, m, m);
            }
            3 => {
                let slab = m * m;
                for s in 0..m {
                    let range = s * slab..(s + 1) * slab;
                    transpose(&buf[range.clone()], &mut self.tmp[range.clone()], m, m);
                    plan.process_with_scratch(&mut self.tmp[range.clone()], &mut self.scratch);
                    transpose(&self.tmp[range.clone()], &mut buf[range], m, m);
                }
                transpose(buf, &mut self.tmp, m, slab);
                plan.process_with_scratch(&mut self.tmp, &mut self.scratch);
                transpose(&self.tmp, buf, slab, m);
            }
            _ => unreachable!("grids are 2D or 3D"),
        }
    }
}

/// `dst[c * rows + r] = src[r * cols + c]`.
fn transpose(src: &[C64], dst: &mut [C64], rows: usize, cols: usize) {
    const BLOCK: usize = 16;
    for rb in (0..rows).step_by(BLOCK) {
        for cb in (0..cols).step_by(BLOCK) {
            for r in rb..(rb + BLOCK).min(rows) {
                for c in cb..(cb + BLOCK).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

/// Split the spectrum `F` of `a + i b` (with `a`, `b` real) into `â`, `b̂`.
pub fn split_packed(grid: &ModeGrid, packed: &[C64], a: &mut [C64], b: &mut [C64]) {
    let half = C64::new(0.5, 0.0);
    let minus_half_i = C64::new(0.0, -0.5);
    for idx in 0..grid.len() {
        let f = packed[idx];
        let g = packed[grid.conj_index(idx)].conj();
        a[idx] = (f + g) * half;
        b[idx] = (f - g) * minus_half_i;
    }
}
