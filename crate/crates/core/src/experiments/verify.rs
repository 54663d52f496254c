//! Deterministic invariant suite.

use std::sync::Arc;

use serde::Serialize;

use super::{streams, zero_field, Setup};
use crate::dynamics::{integrate, Flow, SpdeState, StepControl, Stepper};
use crate::error::Result;
use crate::field::{
    hermitian_defect, inner_l2, inner_weighted, sobolev_norm_sq, FlowField, SobolevIndex, SpectralField, Velocity,
    Vorticity2D,
};
use crate::forcing::{NoiseSpectrum, NoiseTarget};
use crate::grid::ModeGrid;
use crate::rng::RngStream;
use crate::spectral::{
    advection_2d, biot_savart, bilinear_velocity, galerkin_in_place, heat_semigroup_apply, leray_project,
    Workspace,
};
use crate::stats::{Check, Verdict};

pub const CANCELLATION_TOL: f64 = 1e-12;
pub const CONSERVATION_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.verdict.passed())
    }

    pub fn get(&self, quantity: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.quantity == quantity)
    }
}

/// `estimate ≤ bound` check.
fn at_most(quantity: &str, estimate: f64, bound: f64) -> Check {
    Check {
        quantity: quantity.into(),
        estimate,
        ci_half_width: 0.0,
        target: bound,
        verdict: Verdict::from_bool(estimate <= bound),
    }
}

/// Random field with smooth Gaussian coefficients, `E|û(n)|² ∝ e^{−|n|²/ℓ²}`,
/// restricted to `|n| ≤ galerkin` when given.
pub fn random_field<F: Flow>(grid: &Arc<ModeGrid>, scale: f64, galerkin: Option<f64>, rng: &mut RngStream) -> F {
    let mut f = zero_field::<F>(grid);
    let var: Vec<f64> = grid.k2_all().iter().map(|&k2| (-k2 / (scale * scale)).exp()).collect();
    f.add_gaussian(&var, rng);
    if let Some(n) = galerkin {
        galerkin_in_place(&mut f, n);
    }
    f
}

/// Largest relative `L²` and `Ḣ¹` pairings `⟨B(u,u),u⟩` over random 2D fields.
pub fn cancellations_2d(grid: &Arc<ModeGrid>, fields: usize, rng: &mut RngStream) -> Result<(f64, f64)> {
    let mut ws = Workspace::new(Arc::clone(grid));
    let scale = grid.cutoff() as f64 / 2.0;
    let (mut l2, mut h1) = (0.0f64, 0.0f64);
    for _ in 0..fields {
        let xi: Vorticity2D = random_field(grid, scale, None, rng);
        let u = biot_savart(&xi);
        let b = bilinear_velocity(&mut ws, &u, &u, None)?;
        let nb = sobolev_norm_sq(&b, SobolevIndex::homogeneous(0.0)).sqrt();
        let nu = sobolev_norm_sq(&u, SobolevIndex::homogeneous(0.0)).sqrt();
        l2 = l2.max(inner_l2(&b, &u).abs() / (nb * nu));
        // ⟨B(u,u),u⟩_{Ḣ¹} = ⟨u·∇ξ, ξ⟩
        let adv = advection_2d(&mut ws, &xi)?;
        let na = sobolev_norm_sq(&adv, SobolevIndex::homogeneous(0.0)).sqrt();
        let nx = sobolev_norm_sq(&xi, SobolevIndex::homogeneous(0.0)).sqrt();
        h1 = h1.max(inner_l2(&adv, &xi).abs() / (na * nx));
        let nb1 = sobolev_norm_sq(&b, SobolevIndex::homogeneous(1.0)).sqrt();
        h1 = h1.max(inner_weighted(&b, &u, |k2| k2).abs() / (nb1 * nx));
    }
    Ok((l2, h1))
}

/// Largest relative `⟨B_N(u,u),u⟩` over random Galerkin-truncated 3D fields.
pub fn cancellations_3d(grid: &Arc<ModeGrid>, radius: f64, fields: usize, rng: &mut RngStream) -> Result<f64> {
    let mut ws = Workspace::new(Arc::clone(grid));
    let mut worst = 0.0f64;
    for _ in 0..fields {
        let u: Velocity = random_field(grid, radius / 2.0, Some(radius), rng);
        let b = bilinear_velocity(&mut ws, &u, &u, Some(radius))?;
        let nb = sobolev_norm_sq(&b, SobolevIndex::homogeneous(0.0)).sqrt();
        let nu = sobolev_norm_sq(&u, SobolevIndex::homogeneous(0.0)).sqrt();
        worst = worst.max(inner_l2(&b, &u).abs() / (nb * nu));
    }
    Ok(worst)
}

/// Relative drifts of the conserved quadratic quantities of a deterministic
/// run of length `t`, starting from a random field of unit peak speed.
pub fn conservation_drift<F: Flow>(
    grid: &Arc<ModeGrid>,
    galerkin: Option<f64>,
    t: f64,
    cfl: f64,
    rng: &mut RngStream,
) -> Result<(f64, f64)> {
    let mut ws = Workspace::new(Arc::clone(grid));
    let scale = galerkin.unwrap_or(grid.cutoff() as f64) / 4.0;
    let mut f: F = random_field(grid, scale, galerkin, rng);
    let speed = f.max_speed(&mut ws)?;
    f.scale(1.0 / speed);
    let ctrl = StepControl {
        c_cfl: cfl,
        ..StepControl::default()
    };
    let e0 = f.velocity_norm_sq(SobolevIndex::homogeneous(0.0));
    let z0 = f.velocity_norm_sq(SobolevIndex::homogeneous(1.0));
    let mut stepper = Stepper::new(Arc::clone(grid), ctrl, None)?;
    let mut state = SpdeState::new(f, 0.0, 1.0, galerkin, RngStream::new(0, 0))?;
    integrate(&mut stepper, &mut state, t, &mut [])?;
    let e1 = state.field.velocity_norm_sq(SobolevIndex::homogeneous(0.0));
    let z1 = state.field.velocity_norm_sq(SobolevIndex::homogeneous(1.0));
    Ok(((e1 - e0).abs() / e0, (z1 - z0).abs() / z0))
}

/// Analytic bound on `sup_t ‖e^{−tL}F‖_{H^s} t^{α/2} / ‖F‖_{H^{s₀}}` for
/// `ν = 1`, zero-mean `F` and `s ≤ s₀ + α(1+δ)`.
pub fn heat_constant(alpha: f64, delta: f64) -> f64 {
    (2f64.powf(alpha * (1.0 + delta)) * (alpha / (2.0 * std::f64::consts::E)).powf(alpha)).sqrt()
}

/// Largest heat-kernel ratio relative to [`heat_constant`] over random
/// fields, a log grid of times and admissible `(s₀, α, s)` triples.
pub fn heat_kernel_ratio(grid: &Arc<ModeGrid>, delta: f64, fields: usize, rng: &mut RngStream) -> f64 {
    let times: Vec<f64> = (0..=40).map(|i| 10f64.powf(-4.0 + 0.15 * i as f64)).collect();
    let mut worst = 0.0f64;
    for _ in 0..fields {
        // rough data, so that high modes matter at small t
        let mut f = zero_field::<Vorticity2D>(grid);
        let var: Vec<f64> = grid.k2_all().iter().map(|&k2| if k2 > 0.0 { k2.powf(-1.5) } else { 0.0 }).collect();
        f.add_gaussian(&var, rng);
        for s0 in [0.0, 1.0] {
            for alpha in [0.5, 1.0, 2.0] {
                let top = s0 + alpha * (1.0 + delta);
                let bound = heat_constant(alpha, delta);
                let n0 = sobolev_norm_sq(&f, SobolevIndex::inhomogeneous(s0)).sqrt();
                for s in [s0, 0.5 * (s0 + top), top] {
                    for &t in &times {
                        let g = heat_semigroup_apply(&f, t, 1.0, delta);
                        let r = sobolev_norm_sq(&g, SobolevIndex::inhomogeneous(s)).sqrt() * t.powf(alpha / 2.0) / n0;
                        worst = worst.max(r / bound);
                    }
                }
            }
        }
    }
    worst
}

/// Largest `‖u‖²_{Ḣ^{1+δ}} / (‖u‖_{Ḣ¹}^{2/(1+δ)} ‖u‖_{Ḣ^{2+δ}}^{2δ/(1+δ)})`.
pub fn interpolation_ratio(grid: &Arc<ModeGrid>, delta: f64, fields: usize, rng: &mut RngStream) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..fields {
        let scale = 1.0 + (i % 8) as f64;
        let xi: Vorticity2D = random_field(grid, scale, None, rng);
        let a = xi.velocity_norm_sq(SobolevIndex::homogeneous(1.0));
        let b = xi.velocity_norm_sq(SobolevIndex::homogeneous(1.0 + delta));
        let c = xi.velocity_norm_sq(SobolevIndex::homogeneous(2.0 + delta));
        worst = worst.max(b / (a.powf(1.0 / (1.0 + delta)) * c.powf(delta / (1.0 + delta))));
    }
    worst
}

/// Leray idempotence and divergence, plus reality of noise increments.
pub fn projection_defects(grid3: &Arc<ModeGrid>, spectrum2: &NoiseSpectrum, rng: &mut RngStream) -> (f64, f64, f64) {
    let mut u = zero_field::<Velocity>(grid3);
    // unprojected random vector field
    for c in u.components_mut() {
        for &idx in grid3.modes() {
            c[idx] = crate::field::C64::new(rng.normal(), rng.normal());
        }
        for &(a, b) in grid3.half_modes() {
            c[b] = c[a].conj();
        }
    }
    let p = leray_project(&u);
    let pp = leray_project(&p);
    let mut diff = pp.clone();
    diff.axpy(-1.0, &p);
    let idem = sobolev_norm_sq(&diff, SobolevIndex::homogeneous(0.0)).sqrt()
        / sobolev_norm_sq(&p, SobolevIndex::homogeneous(0.0)).sqrt();
    let div = p.max_divergence();
    let mut xi = zero_field::<Vorticity2D>(spectrum2.grid());
    let var: Vec<f64> = spectrum2.amplitudes().iter().map(|a| a * a).collect();
    xi.add_gaussian(&var, rng);
    let mut v = zero_field::<Velocity>(grid3);
    v.add_gaussian(&vec![1.0; grid3.len()], rng);
    let herm = hermitian_defect(&xi).max(hermitian_defect(&v)).max(v.max_divergence());
    (idem, div, herm)
}

/// Run the deterministic suite described by `setup.cfg.verify`.
pub fn verify_invariants(setup: &Setup) -> Result<SuiteReport> {
    let cfg = &setup.cfg;
    let v = &cfg.verify;
    let mut rng = RngStream::derive(cfg.seed, &[streams::VERIFY]);
    let mut checks = Vec::new();

    let g2 = Arc::new(ModeGrid::new(2, v.grid_2d)?);
    let g3 = Arc::new(ModeGrid::new(3, v.grid_3d)?);
    let (l2, h1) = cancellations_2d(&g2, v.fields, &mut rng)?;
    checks.push(at_most("cancellation_2d_l2", l2, CANCELLATION_TOL));
    checks.push(at_most("cancellation_2d_h1", h1, CANCELLATION_TOL));
    let c3 = cancellations_3d(&g3, v.galerkin_3d, v.fields, &mut rng)?;
    checks.push(at_most("cancellation_3d_l2", c3, CANCELLATION_TOL));

    let gc2 = Arc::new(ModeGrid::new(2, v.conservation_grid_2d)?);
    let (e2, z2) = conservation_drift::<Vorticity2D>(&gc2, None, v.conservation_t, v.conservation_cfl, &mut rng)?;
    checks.push(at_most("conservation_2d_energy", e2, CONSERVATION_TOL));
    checks.push(at_most("conservation_2d_enstrophy", z2, CONSERVATION_TOL));
    let gc3 = Arc::new(ModeGrid::new(3, v.conservation_grid_3d)?);
    let (e3, _) = conservation_drift::<Velocity>(
        &gc3,
        Some(v.conservation_galerkin_3d),
        v.conservation_t,
        v.conservation_cfl,
        &mut rng,
    )?;
    checks.push(at_most("conservation_3d_energy", e3, CONSERVATION_TOL));

    let heat = heat_kernel_ratio(&g2, cfg.delta, v.heat_fields, &mut rng);
    checks.push(at_most("heat_kernel_ratio_over_bound", heat, 1.0));
    let interp = interpolation_ratio(&g2, cfg.delta, v.fields, &mut rng);
    checks.push(at_most("interpolation_ratio", interp, 1.0 + 1e-12));

    let (idem, div, herm) = projection_defects(&g3, &setup_spectrum_2d(setup, &g2)?, &mut rng);
    checks.push(at_most("leray_idempotence", idem, 1e-14));
    checks.push(at_most("leray_divergence", div, 1e-12));
    checks.push(at_most("noise_hermitian_defect", herm, 1e-12));
    Ok(SuiteReport { checks })
}

fn setup_spectrum_2d(setup: &Setup, g2: &Arc<ModeGrid>) -> Result<NoiseSpectrum> {
    NoiseSpectrum::new(Arc::clone(g2), setup.cfg.spectrum.clone())
}
