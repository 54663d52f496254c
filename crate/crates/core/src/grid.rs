//! Truncated Fourier lattices on the torus `[0, 2π)^d`.
//!
//! Coefficients are stored in the full FFT layout (`m^d` complex slots, axis 0
//! slowest). Only the *retained* slots carry dynamics: nonzero wavevectors with
//! every component inside the dealias cutoff `|n_i| ≤ K`, where `3K < m` so
//! that quadratic products are alias-free. Everything else is held at zero.

use crate::error::{Error, Result};

/// Integer wavevector; unused trailing axes are zero.
pub type Wavevector = [i32; 3];

#[derive(Debug, Clone)]
pub struct ModeGrid {
    dim: usize,
    m: usize,
    cutoff: i32,
    wavevectors: Vec<Wavevector>,
    k2: Vec<f64>,
    retained: Vec<bool>,
    modes: Vec<usize>,
    half: Vec<(usize, usize)>,
}

impl ModeGrid {
    /// Grid with the largest alias-free cutoff `K = (m - 1) / 3`.
    pub fn new(dim: usize, m: usize) -> Result<Self> {
        if m < 4 {
            return Err(Error::Resolution(format!(
                "per-axis resolution {m} is too small"
            )));
        }
        Self::with_cutoff(dim, m, (m - 1) / 3)
    }

    pub fn with_cutoff(dim: usize, m: usize, cutoff: usize) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidParameter(format!(
                "dimension must be 2 or 3, got {dim}"
            )));
        }
        if cutoff == 0 || 3 * cutoff >= m {
            return Err(Error::Resolution(format!(
                "dealias cutoff {cutoff} needs 3*K < M, but M = {m}"
            )));
        }
        let len = m.pow(dim as u32);
        let k = cutoff as i32;
        let mut wavevectors = vec![[0i32; 3]; len];
        let mut k2 = vec![0.0; len];
        let mut retained = vec![false; len];
        for (idx, wv) in wavevectors.iter_mut().enumerate() {
            let mut rem = idx;
            for axis in (0..dim).rev() {
                let j = (rem % m) as i32;
                rem /= m;
                wv[axis] = if j as usize <= m / 2 { j } else { j - m as i32 };
            }
            k2[idx] = wv.iter().map(|&c| (c as f64) * (c as f64)).sum();
            retained[idx] = k2[idx] > 0.0 && wv.iter().all(|c| c.abs() <= k);
        }

        let mut grid = ModeGrid {
            dim,
            m,
            cutoff: k,
            wavevectors,
            k2,
            retained,
            modes: Vec::new(),
            half: Vec::new(),
        };

        // lexicographic enumeration n_0 major, each axis ascending from -K to K
        let side = (2 * k + 1) as usize;
        let count = side.pow(dim as u32);
        let mut modes = Vec::with_capacity(count - 1);
        for flat in 0..count {
            let mut n = [0i32; 3];
            let mut rem = flat;
            for axis in (0..dim).rev() {
                n[axis] = (rem % side) as i32 - k;
                rem /= side;
            }
            if n == [0, 0, 0] {
                continue;
            }
            modes.push(grid.index_of(n).expect("inside cutoff"));
        }
        let half = modes
            .iter()
            .copied()
            .filter(|&idx| is_positive(&grid.wavevectors[idx]))
            .map(|idx| (idx, grid.conj_index(idx)))
            .collect();
        grid.modes = modes;
        grid.half = half;
        Ok(grid)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Collocation points per axis.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Per-axis dealias cutoff `K`.
    pub fn cutoff(&self) -> usize {
        self.cutoff as usize
    }

    /// Number of storage slots, `m^d`.
    pub fn len(&self) -> usize {
        self.k2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k2.is_empty()
    }

    /// Physical grid spacing `2π / m`.
    pub fn dx(&self) -> f64 {
        std::f64::consts::TAU / self.m as f64
    }

    /// Largest `|n|` among retained modes.
    pub fn max_radius(&self) -> f64 {
        (self.dim as f64).sqrt() * self.cutoff as f64
    }

    /// Storage indices of retained modes in deterministic lexicographic order.
    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    /// Retained modes with `n > 0` lexicographically, paired with the slot of `-n`.
    pub fn half_modes(&self) -> &[(usize, usize)] {
        &self.half
    }

    pub fn wavevector(&self, idx: usize) -> Wavevector {
        self.wavevectors[idx]
    }

    /// `|n|²` at a storage slot.
    pub fn k2(&self, idx: usize) -> f64 {
        self.k2[idx]
    }

    pub fn k2_all(&self) -> &[f64] {
        &self.k2
    }

    pub fn is_retained(&self, idx: usize) -> bool {
        self.retained[idx]
    }

    pub fn retained_mask(&self) -> &[bool] {
        &self.retained
    }

    /// Storage slot for a wavevector, if it lies inside the dealias cutoff.
    pub fn index_of(&self, n: Wavevector) -> Option<usize> {
        let m = self.m as i32;
        let mut idx = 0usize;
        for (axis, &c) in n.iter().enumerate() {
            if axis >= self.dim {
                if c != 0 {
                    return None;
                }
                continue;
            }
            if c.abs() > self.cutoff {
                return None;
            }
            idx = idx * self.m + c.rem_euclid(m) as usize;
        }
        Some(idx)
    }

    /// Slot of `-n`.
    pub fn conj_index(&self, idx: usize) -> usize {
        let m = self.m;
        let mut rem = idx;
        let mut out = 0;
        let mut stride = 1;
        for _ in 0..self.dim {
            let j = rem % m;
            rem /= m;
            out += ((m - j) % m) * stride;
            stride *= m;
        }
        out
    }

    pub fn same_shape(&self, other: &ModeGrid) -> bool {
        self.dim == other.dim && self.m == other.m && self.cutoff == other.cutoff
    }
}

fn is_positive(n: &Wavevector) -> bool {
    n.iter()
        .find(|&&c| c != 0)
        .map(|&c| c > 0)
        .unwrap_or(false)
}
