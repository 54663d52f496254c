//! Noise spectra `φ_n`, the constants `B_k = Σ |n|^{2k} φ_n²`, and exact
//! sampling of the per-mode Ornstein–Uhlenbeck processes that make up the
//! stochastic convolution.
//!
//! Convention: the forcing acts on the velocity, and for every retained `n`
//! the stationary linear law has `E|û(n)|² = φ_n² / (2 λ_n)` with
//! `λ_n = |n|^{2(1+δ)}`. Summing over the lattice gives
//! `E‖z‖²_{Ḣ^{1+δ}} = B₀/2` and `E‖z‖²_{Ḣ^{2+δ}} = B₁/2`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{SpectralField, Velocity, Vorticity2D, C64};
use crate::grid::ModeGrid;
use crate::rng::RngStream;
use crate::spectral::hyperviscous_symbol;

/// Radial spectrum families, addressable from config by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectrumKind {
    /// `φ_n = amplitude · e^{−rate |n|}`.
    ExponentialDecay { amplitude: f64, rate: f64 },
    /// `φ_n = amplitude · |n|^{−exponent}`.
    PowerLaw { amplitude: f64, exponent: f64 },
    /// `e^{−|n|}` below `k`, `k^α / |n|` on `k ≤ |n| ≤ 2k`, `e^{−(|n|−2k)}` above.
    Annulus { k: f64, alpha: f64 },
    /// `φ_n = amplitude` on the single shell `|n| = radius`, zero elsewhere.
    Shell { radius: f64, amplitude: f64 },
}

impl SpectrumKind {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match *self {
            SpectrumKind::ExponentialDecay { amplitude, rate } => {
                if !(amplitude >= 0.0 && rate > 0.0) {
                    return bad(format!(
                        "exponential_decay needs amplitude >= 0 and rate > 0 (got {amplitude}, {rate})"
                    ));
                }
            }
            SpectrumKind::PowerLaw { amplitude, exponent } => {
                if !(amplitude >= 0.0 && exponent.is_finite()) {
                    return bad(format!(
                        "power_law needs amplitude >= 0 and a finite exponent (got {amplitude}, {exponent})"
                    ));
                }
            }
            SpectrumKind::Annulus { k, alpha } => {
                if !(k >= 1.0 && alpha > 0.0) {
                    return bad(format!("annulus needs k >= 1 and alpha > 0 (got k={k}, alpha={alpha})"));
                }
            }
            SpectrumKind::Shell { radius, amplitude } => {
                if !(radius > 0.0 && amplitude >= 0.0) {
                    return bad(format!(
                        "shell needs radius > 0 and amplitude >= 0 (got {radius}, {amplitude})"
                    ));
                }
            }
        }
        Ok(())
    }

    /// Radial profile `φ(|n|)`.
    pub fn profile(&self, r: f64) -> f64 {
        match *self {
            SpectrumKind::ExponentialDecay { amplitude, rate } => amplitude * (-rate * r).exp(),
            SpectrumKind::PowerLaw { amplitude, exponent } => amplitude * r.powf(-exponent),
            SpectrumKind::Annulus { k, alpha } => {
                if r < k {
                    (-r).exp()
                } else if r <= 2.0 * k {
                    k.powf(alpha) / r
                } else {
                    (-(r - 2.0 * k)).exp()
                }
            }
            SpectrumKind::Shell { radius, amplitude } => {
                if (r - radius).abs() < 1e-9 {
                    amplitude
                } else {
                    0.0
                }
            }
        }
    }

    /// Radius carrying the bulk of the forcing, for resolution checks.
    /// `None` for families without a distinguished scale.
    pub fn nominal_radius(&self) -> Option<f64> {
        match *self {
            SpectrumKind::Annulus { k, .. } => Some(2.0 * k),
            SpectrumKind::Shell { radius, .. } => Some(radius),
            _ => None,
        }
    }
}

/// Amplitudes `φ_n` on a grid's retained modes.
#[derive(Debug, Clone)]
pub struct NoiseSpectrum {
    grid: Arc<ModeGrid>,
    kind: SpectrumKind,
    galerkin: Option<f64>,
    amplitudes: Vec<f64>,
}

impl NoiseSpectrum {
    pub fn new(grid: Arc<ModeGrid>, kind: SpectrumKind) -> Result<Self> {
        kind.validate()?;
        let mut amplitudes = vec![0.0; grid.len()];
        for &idx in grid.modes() {
            amplitudes[idx] = kind.profile(grid.k2(idx).sqrt());
        }
        Ok(NoiseSpectrum {
            grid,
            kind,
            galerkin: None,
            amplitudes,
        })
    }

    /// `P_{≤N}`-projected forcing: amplitudes beyond radius `N` set to zero.
    pub fn truncated(&self, radius: f64) -> Self {
        let mut out = self.clone();
        let limit = radius * radius * (1.0 + 1e-12);
        for (idx, a) in out.amplitudes.iter_mut().enumerate() {
            if self.grid.k2(idx) > limit {
                *a = 0.0;
            }
        }
        out.galerkin = Some(radius);
        out
    }

    pub fn grid(&self) -> &Arc<ModeGrid> {
        &self.grid
    }

    pub fn kind(&self) -> &SpectrumKind {
        &self.kind
    }

    pub fn galerkin_radius(&self) -> Option<f64> {
        self.galerkin
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    /// `B_k = Σ_n |n|^{2k} φ_n²` over retained modes.
    pub fn b_constant(&self, k: f64) -> f64 {
        self.grid
            .modes()
            .iter()
            .map(|&idx| self.grid.k2(idx).powf(k) * self.amplitudes[idx].powi(2))
            .sum()
    }

    pub fn max_amplitude_sq(&self) -> f64 {
        self.amplitudes.iter().fold(0.0, |m, a| m.max(a * a))
    }

    /// `Σ_n φ_n² |û(n)|²` for the velocity described by `f`.
    pub fn forced_energy<F: NoiseTarget>(&self, f: &F) -> f64 {
        self.grid
            .modes()
            .iter()
            .map(|&idx| self.amplitudes[idx].powi(2) * f.velocity_mode_energy(idx))
            .sum()
    }
}

/// Fields that can receive Hermitian Gaussian increments with prescribed
/// per-mode velocity variance.
pub trait NoiseTarget: SpectralField {
    /// Add an independent centred Gaussian to every retained mode with
    /// `E|Δû(n)|² = var[n]`, preserving reality and incompressibility.
    fn add_gaussian(&mut self, var: &[f64], rng: &mut RngStream);

    /// `|û(n)|²` of the velocity this field represents.
    fn velocity_mode_energy(&self, idx: usize) -> f64;
}

impl NoiseTarget for Vorticity2D {
    fn add_gaussian(&mut self, var: &[f64], rng: &mut RngStream) {
        let grid = Arc::clone(self.grid());
        let c = self.coeffs_mut();
        for &(a, b) in grid.half_modes() {
            // |ξ̂| = |n| |û|
            let sd = (grid.k2(a) * var[a] / 2.0).sqrt();
            let g = C64::new(sd * rng.normal(), sd * rng.normal());
            c[a] += g;
            c[b] += g.conj();
        }
    }

    fn velocity_mode_energy(&self, idx: usize) -> f64 {
        self.coeffs()[idx].norm_sqr() / self.grid().k2(idx)
    }
}

impl NoiseTarget for Velocity {
    fn add_gaussian(&mut self, var: &[f64], rng: &mut RngStream) {
        let grid = Arc::clone(self.grid());
        let d = grid.dim();
        // isotropic draw, then projection onto the (d−1)-plane ⟂ n
        let spread = 1.0 / (d - 1) as f64;
        let comps = self.components_mut();
        let mut g = [C64::new(0.0, 0.0); 3];
        for &(a, b) in grid.half_modes() {
            let sd = (var[a] * spread / 2.0).sqrt();
            for gc in g.iter_mut().take(d) {
                *gc = C64::new(sd * rng.normal(), sd * rng.normal());
            }
            let n = grid.wavevector(a);
            let k2 = grid.k2(a);
            let mut dot = C64::new(0.0, 0.0);
            for (ax, gc) in g.iter().enumerate().take(d) {
                dot += gc * n[ax] as f64;
            }
            for ax in 0..d {
                let v = g[ax] - dot * (n[ax] as f64 / k2);
                comps[ax][a] += v;
                comps[ax][b] += v.conj();
            }
        }
    }

    fn velocity_mode_energy(&self, idx: usize) -> f64 {
        self.mode_energy(idx)
    }
}

/// Exact one-step transition of `dz = −νLz dt + √ν dζ` over a step `h`.
#[derive(Debug, Clone)]
pub struct OuPropagator {
    decay: Vec<f64>,
    half_decay: Vec<f64>,
    variance: Vec<f64>,
}

impl OuPropagator {
    pub fn new(spectrum: &NoiseSpectrum, h: f64, nu: f64, delta: f64) -> Self {
        let lambda = hyperviscous_symbol(spectrum.grid(), delta);
        let mut decay = vec![1.0; lambda.len()];
        let mut half_decay = vec![1.0; lambda.len()];
        let mut variance = vec![0.0; lambda.len()];
        for &idx in spectrum.grid().modes() {
            let l = lambda[idx];
            let x = nu * h * l;
            decay[idx] = (-x).exp();
            half_decay[idx] = (-0.5 * x).exp();
            // φ² ∫₀ʰ ν e^{−2ν(h−s)λ} ds = φ² (1 − e^{−2νhλ}) / (2λ)
            variance[idx] = spectrum.amplitudes()[idx].powi(2) * (-(-2.0 * x).exp_m1()) / (2.0 * l);
        }
        OuPropagator {
            decay,
            half_decay,
            variance,
        }
    }

    /// `e^{−νhλ_n}` per slot.
    pub fn decay(&self) -> &[f64] {
        &self.decay
    }

    /// `e^{−νhλ_n/2}` per slot.
    pub fn half_decay(&self) -> &[f64] {
        &self.half_decay
    }

    /// Velocity variance of the stochastic increment per slot.
    pub fn variance(&self) -> &[f64] {
        &self.variance
    }

    pub fn add_increment<F: NoiseTarget>(&self, f: &mut F, rng: &mut RngStream) {
        f.add_gaussian(&self.variance, rng);
    }

    /// Full OU step: decay then add the stochastic increment.
    pub fn step<F: NoiseTarget>(&self, z: &mut F, rng: &mut RngStream) {
        z.scale_modes(&self.decay);
        self.add_increment(z, rng);
    }
}

/// One exact step of the stochastic convolution.
pub fn ou_convolution_step<F: NoiseTarget>(
    z: &F,
    h: f64,
    nu: f64,
    delta: f64,
    spectrum: &NoiseSpectrum,
    rng: &mut RngStream,
) -> F {
    let mut out = z.clone();
    OuPropagator::new(spectrum, h, nu, delta).step(&mut out, rng);
    out
}

/// Stationary variances `φ_n² / (2λ_n)` of the linear equation.
pub fn stationary_variance(spectrum: &NoiseSpectrum, delta: f64) -> Vec<f64> {
    let lambda = hyperviscous_symbol(spectrum.grid(), delta);
    spectrum
        .amplitudes()
        .iter()
        .zip(&lambda)
        .map(|(&a, &l)| if l > 0.0 { a * a / (2.0 * l) } else { 0.0 })
        .collect()
}

/// Draw from the exact stationary law of the linear (OU) equation.
pub fn sample_stationary_linear<F: NoiseTarget>(
    template: &F,
    spectrum: &NoiseSpectrum,
    delta: f64,
    rng: &mut RngStream,
) -> F {
    let mut out = template.zeros_like();
    out.add_gaussian(&stationary_variance(spectrum, delta), rng);
    out
}
