//! Spectral field types and the coefficient-convention norms.
//!
//! A real field `f(x) = Σ_n f̂(n) e^{i n·x}` is stored through its coefficients
//! `f̂(n)`. Norms are plain coefficient sums, `‖f‖²_{Ḣ^s} = Σ |n|^{2s} |f̂(n)|²`,
//! with no `(2π)^d` volume factor.

use std::sync::Arc;

use rustfft::num_complex::Complex64;

use crate::grid::ModeGrid;

pub type C64 = Complex64;

/// Common surface of scalar and vector spectral fields.
pub trait SpectralField: Clone + Send + Sync {
    fn grid(&self) -> &Arc<ModeGrid>;
    fn components(&self) -> &[Vec<C64>];
    fn components_mut(&mut self) -> &mut [Vec<C64>];

    fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for c in out.components_mut() {
            c.fill(C64::new(0.0, 0.0));
        }
        out
    }

    /// `Σ_components |f̂_c(idx)|²`.
    fn mode_energy(&self, idx: usize) -> f64 {
        self.components().iter().map(|c| c[idx].norm_sqr()).sum()
    }

    /// `self += a * x`.
    fn axpy(&mut self, a: f64, x: &Self) {
        for (dst, src) in self.components_mut().iter_mut().zip(x.components()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s * a;
            }
        }
    }

    fn scale(&mut self, a: f64) {
        for c in self.components_mut() {
            for v in c.iter_mut() {
                *v *= a;
            }
        }
    }

    /// Multiply every slot by a per-slot real factor.
    fn scale_modes(&mut self, factors: &[f64]) {
        for c in self.components_mut() {
            for (v, &f) in c.iter_mut().zip(factors) {
                *v *= f;
            }
        }
    }

    fn is_finite(&self) -> bool {
        self.components()
            .iter()
            .all(|c| c.iter().all(|v| v.re.is_finite() && v.im.is_finite()))
    }
}

/// Scalar vorticity `ξ` of a 2D flow.
#[derive(Debug, Clone)]
pub struct Vorticity2D {
    grid: Arc<ModeGrid>,
    coeffs: Vec<C64>,
}

impl Vorticity2D {
    pub fn zeros(grid: Arc<ModeGrid>) -> Self {
        assert_eq!(grid.dim(), 2, "vorticity fields live on 2D grids");
        let coeffs = vec![C64::new(0.0, 0.0); grid.len()];
        Vorticity2D { grid, coeffs }
    }

    /// Build from full-layout coefficients; non-retained slots are cleared.
    pub fn from_coeffs(grid: Arc<ModeGrid>, mut coeffs: Vec<C64>) -> Self {
        assert_eq!(grid.dim(), 2);
        assert_eq!(coeffs.len(), grid.len());
        for (v, &keep) in coeffs.iter_mut().zip(grid.retained_mask()) {
            if !keep {
                *v = C64::new(0.0, 0.0);
            }
        }
        Vorticity2D { grid, coeffs }
    }

    /// Set `ξ̂(n) = c` and `ξ̂(-n) = conj(c)`.
    pub fn set_mode(&mut self, n: [i32; 2], c: C64) {
        let idx = self
            .grid
            .index_of([n[0], n[1], 0])
            .expect("mode outside the dealias cutoff");
        let cj = self.grid.conj_index(idx);
        self.coeffs[idx] = c;
        self.coeffs[cj] = c.conj();
    }

    pub fn mode(&self, n: [i32; 2]) -> C64 {
        self.grid
            .index_of([n[0], n[1], 0])
            .map(|i| self.coeffs[i])
            .unwrap_or_default()
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [C64] {
        &mut self.coeffs
    }
}

impl SpectralField for Vorticity2D {
    fn grid(&self) -> &Arc<ModeGrid> {
        &self.grid
    }
    fn components(&self) -> &[Vec<C64>] {
        std::slice::from_ref(&self.coeffs)
    }
    fn components_mut(&mut self) -> &mut [Vec<C64>] {
        std::slice::from_mut(&mut self.coeffs)
    }
}

/// Velocity field with `d` components. Divergence-free once it has gone
/// through [`crate::spectral::leray_project`] or a constructor that projects.
#[derive(Debug, Clone)]
pub struct Velocity {
    grid: Arc<ModeGrid>,
    comps: Vec<Vec<C64>>,
}

impl Velocity {
    pub fn zeros(grid: Arc<ModeGrid>) -> Self {
        let comps = vec![vec![C64::new(0.0, 0.0); grid.len()]; grid.dim()];
        Velocity { grid, comps }
    }

    /// Raw component arrays, no projection applied; non-retained slots cleared.
    pub fn from_components(grid: Arc<ModeGrid>, mut comps: Vec<Vec<C64>>) -> Self {
        assert_eq!(comps.len(), grid.dim());
        for c in comps.iter_mut() {
            assert_eq!(c.len(), grid.len());
            for (v, &keep) in c.iter_mut().zip(grid.retained_mask()) {
                if !keep {
                    *v = C64::new(0.0, 0.0);
                }
            }
        }
        Velocity { grid, comps }
    }

    /// Set `û(n) = c` and `û(-n) = conj(c)` component-wise.
    pub fn set_mode(&mut self, n: [i32; 3], c: &[C64]) {
        let idx = self.grid.index_of(n).expect("mode outside the dealias cutoff");
        let cj = self.grid.conj_index(idx);
        for (comp, &v) in self.comps.iter_mut().zip(c) {
            comp[idx] = v;
            comp[cj] = v.conj();
        }
    }

    pub fn mode(&self, n: [i32; 3]) -> Vec<C64> {
        match self.grid.index_of(n) {
            Some(i) => self.comps.iter().map(|c| c[i]).collect(),
            None => vec![C64::default(); self.comps.len()],
        }
    }

    /// Largest `|n·û(n)| / (|n| |û(n)|)` over retained modes.
    pub fn max_divergence(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for &idx in self.grid.modes() {
            let n = self.grid.wavevector(idx);
            let mut dot = C64::new(0.0, 0.0);
            for (a, comp) in self.comps.iter().enumerate() {
                dot += comp[idx] * n[a] as f64;
            }
            let mag = self.mode_energy(idx).sqrt() * self.grid.k2(idx).sqrt();
            if mag > 0.0 {
                worst = worst.max(dot.norm() / mag);
            }
        }
        worst
    }
}

impl SpectralField for Velocity {
    fn grid(&self) -> &Arc<ModeGrid> {
        &self.grid
    }
    fn components(&self) -> &[Vec<C64>] {
        &self.comps
    }
    fn components_mut(&mut self) -> &mut [Vec<C64>] {
        &mut self.comps
    }
}

/// Sobolev exponent with its homogeneity flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SobolevIndex {
    pub s: f64,
    /// `Ḣ^s` weights `|n|^{2s}`; otherwise `H^s` with `⟨n⟩^{2s} = (1+|n|²)^s`.
    pub homogeneous: bool,
}

impl SobolevIndex {
    pub fn homogeneous(s: f64) -> Self {
        SobolevIndex {
            s,
            homogeneous: true,
        }
    }

    pub fn inhomogeneous(s: f64) -> Self {
        SobolevIndex {
            s,
            homogeneous: false,
        }
    }

    pub fn weight(&self, k2: f64) -> f64 {
        if self.homogeneous {
            k2.powf(self.s)
        } else {
            (1.0 + k2).powf(self.s)
        }
    }

    /// Same index shifted by `ds`.
    pub fn shifted(&self, ds: f64) -> Self {
        SobolevIndex {
            s: self.s + ds,
            homogeneous: self.homogeneous,
        }
    }
}

/// `Σ_n w(|n|²) Σ_c |f̂_c(n)|²` over retained modes.
pub fn weighted_energy<F: SpectralField>(f: &F, weight: impl Fn(f64) -> f64) -> f64 {
    let grid = f.grid();
    grid.modes()
        .iter()
        .map(|&idx| weight(grid.k2(idx)) * f.mode_energy(idx))
        .sum()
}

pub fn sobolev_norm_sq<F: SpectralField>(f: &F, idx: SobolevIndex) -> f64 {
    weighted_energy(f, |k2| idx.weight(k2))
}

/// `‖f‖_{H^s}` or `‖f‖_{Ḣ^s}` in the coefficient convention.
pub fn sobolev_norm<F: SpectralField>(f: &F, idx: SobolevIndex) -> f64 {
    sobolev_norm_sq(f, idx).sqrt()
}

/// Real `L²` pairing `Re Σ_n Σ_c f̂_c(n) conj(ĝ_c(n))`.
pub fn inner_l2<F: SpectralField>(f: &F, g: &F) -> f64 {
    inner_weighted(f, g, |_| 1.0)
}

pub fn inner_weighted<F: SpectralField>(f: &F, g: &F, weight: impl Fn(f64) -> f64) -> f64 {
    let grid = f.grid();
    let mut acc = 0.0;
    for &idx in grid.modes() {
        let w = weight(grid.k2(idx));
        for (a, b) in f.components().iter().zip(g.components()) {
            acc += w * (a[idx] * b[idx].conj()).re;
        }
    }
    acc
}

/// Largest Hermitian-symmetry defect `|f̂(n) - conj f̂(-n)|`.
pub fn hermitian_defect<F: SpectralField>(f: &F) -> f64 {
    let grid = f.grid();
    let mut worst: f64 = 0.0;
    for &(a, b) in grid.half_modes() {
        for c in f.components() {
            worst = worst.max((c[a] - c[b].conj()).norm());
        }
    }
    worst
}

/// Fields expressed through the velocity they describe, so that measurement
/// code can treat 2D vorticity and 3D velocity states uniformly.
pub trait FlowField: SpectralField {
    /// `‖u‖²_{Ḣ^s}` of the underlying velocity.
    fn velocity_norm_sq(&self, idx: SobolevIndex) -> f64;

    /// `Σ_n w(|n|²) |û(n)|²`.
    fn velocity_weighted(&self, weight: impl Fn(f64) -> f64) -> f64;
}

impl FlowField for Vorticity2D {
    fn velocity_norm_sq(&self, idx: SobolevIndex) -> f64 {
        // |û(n)| = |ξ̂(n)| / |n|
        weighted_energy(self, |k2| idx.weight(k2) / k2)
    }

    fn velocity_weighted(&self, weight: impl Fn(f64) -> f64) -> f64 {
        weighted_energy(self, |k2| weight(k2) / k2)
    }
}

impl FlowField for Velocity {
    fn velocity_norm_sq(&self, idx: SobolevIndex) -> f64 {
        sobolev_norm_sq(self, idx)
    }

    fn velocity_weighted(&self, weight: impl Fn(f64) -> f64) -> f64 {
        weighted_energy(self, weight)
    }
}
