//! Time integration of the deterministic and stochastic systems.
//!
//! Every stepper advances `∂_t u + νLu = N(u) + √ν η` with `L = (−Δ)^{1+δ}`
//! treated exactly through the integrating factor `e^{−νhL}`. The stochastic
//! part is the exact Ornstein–Uhlenbeck increment, so with the nonlinearity
//! switched off a step samples the linear transition law without error.

use std::ops::ControlFlow;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{sobolev_norm_sq, FlowField, SobolevIndex, SpectralField, Velocity, Vorticity2D, C64};
use crate::forcing::{NoiseSpectrum, NoiseTarget, OuPropagator};
use crate::grid::ModeGrid;
use crate::rng::RngStream;
use crate::spectral::{
    advection_2d_into, bilinear_velocity_into, galerkin_in_place, hyperviscous_symbol, max_speed,
    max_speed_2d, Workspace,
};

/// `‖field‖_{L²}` above which a run is declared unstable.
pub const OVERFLOW_GUARD: f64 = 1e12;

/// States the steppers know how to advance.
pub trait Flow: FlowField + NoiseTarget {
    /// Deterministic tendency `−B(u, u)` (or `−u·∇ξ`), dealiased and,
    /// if `galerkin` is set, projected onto `|n| ≤ N`.
    fn tendency_into(&self, ws: &mut Workspace, galerkin: Option<f64>, out: &mut Self) -> Result<()>;

    /// `max |u|` over the collocation grid.
    fn max_speed(&self, ws: &mut Workspace) -> Result<f64>;

    /// Number of stored components on a `dim`-dimensional grid.
    fn component_count(dim: usize) -> usize;

    /// Rebuild from per-component slot arrays (non-retained slots are cleared).
    fn from_components(grid: Arc<ModeGrid>, comps: Vec<Vec<C64>>) -> Self;
}

impl Flow for Vorticity2D {
    fn tendency_into(&self, ws: &mut Workspace, galerkin: Option<f64>, out: &mut Self) -> Result<()> {
        advection_2d_into(ws, self, out)?;
        out.scale(-1.0);
        if let Some(n) = galerkin {
            galerkin_in_place(out, n);
        }
        Ok(())
    }

    fn max_speed(&self, ws: &mut Workspace) -> Result<f64> {
        max_speed_2d(ws, self)
    }

    fn component_count(_dim: usize) -> usize {
        1
    }

    fn from_components(grid: Arc<ModeGrid>, mut comps: Vec<Vec<C64>>) -> Self {
        Vorticity2D::from_coeffs(grid, comps.swap_remove(0))
    }
}

impl Flow for Velocity {
    fn tendency_into(&self, ws: &mut Workspace, galerkin: Option<f64>, out: &mut Self) -> Result<()> {
        bilinear_velocity_into(ws, self, self, galerkin, out)?;
        out.scale(-1.0);
        Ok(())
    }

    fn max_speed(&self, ws: &mut Workspace) -> Result<f64> {
        max_speed(ws, self)
    }

    fn component_count(dim: usize) -> usize {
        dim
    }

    fn from_components(grid: Arc<ModeGrid>, comps: Vec<Vec<C64>>) -> Self {
        Velocity::from_components(grid, comps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Fourth-order Runge–Kutta in the integrating-factor variables.
    #[default]
    IntegratingFactorRk4,
    /// First-order exponential Euler, `u' = e^{−νhL}(u + h N(u))`.
    ExponentialEuler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepControl {
    pub c_cfl: f64,
    pub h_max: f64,
    /// Constant step, bypassing the CFL rule.
    pub fixed_dt: Option<f64>,
    pub scheme: Scheme,
    /// `false` drops the transport term, leaving the linear (OU) equation.
    pub nonlinear: bool,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            c_cfl: 0.5,
            h_max: 0.05,
            fixed_dt: None,
            scheme: Scheme::IntegratingFactorRk4,
            nonlinear: true,
        }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_cfl > 0.0 && self.c_cfl <= 1.0) {
            return Err(Error::InvalidParameter(format!("c_cfl must lie in (0, 1], got {}", self.c_cfl)));
        }
        if !(self.h_max > 0.0 && self.h_max.is_finite()) {
            return Err(Error::InvalidParameter(format!("h_max must be positive, got {}", self.h_max)));
        }
        if let Some(dt) = self.fixed_dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::InvalidParameter(format!("fixed_dt must be positive, got {dt}")));
            }
        }
        Ok(())
    }
}

/// One trajectory: field, clock, parameters and its private random stream.
#[derive(Debug, Clone)]
pub struct SpdeState<F> {
    pub field: F,
    pub time: f64,
    pub nu: f64,
    pub delta: f64,
    /// Galerkin radius `N`; `None` keeps every dealiased mode.
    pub galerkin: Option<f64>,
    pub rng: RngStream,
}

impl<F: Flow> SpdeState<F> {
    pub fn new(field: F, nu: f64, delta: f64, galerkin: Option<f64>, rng: RngStream) -> Result<Self> {
        if !(nu >= 0.0 && nu.is_finite()) {
            return Err(Error::InvalidParameter(format!("viscosity must be >= 0, got {nu}")));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidParameter(format!("delta must be > 0, got {delta}")));
        }
        let mut field = field;
        if let Some(n) = galerkin {
            galerkin_in_place(&mut field, n);
        }
        Ok(SpdeState {
            field,
            time: 0.0,
            nu,
            delta,
            galerkin,
            rng,
        })
    }
}

struct Factors {
    key: (u64, u64, u64, u64),
    full: Vec<f64>,
    half: Vec<f64>,
    noise: Option<OuPropagator>,
}

/// Reusable stepping machinery for one grid: FFT workspace, stage buffers
/// and cached exponential factors.
pub struct Stepper<F> {
    ws: Workspace,
    ctrl: StepControl,
    noise: Option<NoiseSpectrum>,
    factors: Vec<Factors>,
    current: usize,
    lambda: Option<(u64, Vec<f64>)>,
    stages: Vec<F>,
}

const FACTOR_CACHE: usize = 8;

/// Largest `h_max · 2^{−j/4}` not exceeding `dt`, so that repeated CFL
/// steps reuse cached exponential factors.
pub fn ladder_step(dt: f64, h_max: f64) -> f64 {
    if dt >= h_max {
        return h_max;
    }
    let j = (4.0 * (h_max / dt).log2()).ceil();
    let mut h = h_max * (-j / 4.0).exp2();
    // guard against rounding putting h a hair above dt
    while h > dt {
        h *= (-0.25f64).exp2();
    }
    h
}

impl<F: Flow> Stepper<F> {
    /// `noise = None` gives the deterministic (possibly hyperviscous) system.
    /// The forcing is projected onto the state's Galerkin ball when it has one.
    pub fn new(grid: Arc<ModeGrid>, ctrl: StepControl, noise: Option<NoiseSpectrum>) -> Result<Self> {
        ctrl.validate()?;
        if let Some(s) = &noise {
            if !s.grid().same_shape(&grid) {
                return Err(Error::Resolution("noise spectrum lives on a different grid".into()));
            }
        }
        Ok(Stepper {
            ws: Workspace::new(grid),
            ctrl,
            noise,
            factors: Vec::new(),
            current: 0,
            lambda: None,
            stages: Vec::new(),
        })
    }

    pub fn control(&self) -> &StepControl {
        &self.ctrl
    }

    pub fn workspace(&mut self) -> &mut Workspace {
        &mut self.ws
    }

    pub fn noise(&self) -> Option<&NoiseSpectrum> {
        self.noise.as_ref()
    }

    /// CFL step for `field`: `min(h_max, c_cfl Δx / max|u|)`.
    pub fn cfl_dt(&mut self, field: &F) -> Result<f64> {
        if let Some(dt) = self.ctrl.fixed_dt {
            return Ok(dt);
        }
        let speed = field.max_speed(&mut self.ws)?;
        let dx = field.grid().dx();
        Ok(if speed > 0.0 {
            self.ctrl.h_max.min(self.ctrl.c_cfl * dx / speed)
        } else {
            self.ctrl.h_max
        })
    }

    /// CFL step rounded down onto the [`ladder_step`] grid (fixed steps
    /// are used as given).
    pub fn ladder_dt(&mut self, field: &F) -> Result<f64> {
        let dt = self.cfl_dt(field)?;
        Ok(if self.ctrl.fixed_dt.is_some() {
            dt
        } else {
            ladder_step(dt, self.ctrl.h_max)
        })
    }

    fn prepare(&mut self, template: &F, h: f64, nu: f64, delta: f64, galerkin: Option<f64>) {
        let key = (h.to_bits(), nu.to_bits(), delta.to_bits(), galerkin.map_or(u64::MAX, f64::to_bits));
        if let Some(pos) = self.factors.iter().position(|f| f.key == key) {
            self.current = pos;
            return;
        }
        if self.lambda.as_ref().is_none_or(|(d, _)| *d != delta.to_bits()) {
            self.lambda = Some((delta.to_bits(), hyperviscous_symbol(template.grid(), delta)));
        }
        let lambda = &self.lambda.as_ref().expect("just set").1;
        let full = lambda.iter().map(|l| (-nu * h * l).exp()).collect();
        let half = lambda.iter().map(|l| (-0.5 * nu * h * l).exp()).collect();
        let noise = match &self.noise {
            Some(s) if nu > 0.0 && h > 0.0 => Some(match galerkin {
                Some(n) => OuPropagator::new(&s.truncated(n), h, nu, delta),
                None => OuPropagator::new(s, h, nu, delta),
            }),
            _ => None,
        };
        let entry = Factors { key, full, half, noise };
        if self.factors.len() < FACTOR_CACHE {
            self.factors.push(entry);
            self.current = self.factors.len() - 1;
        } else {
            // replace round-robin
            self.current = (self.current + 1) % FACTOR_CACHE;
            self.factors[self.current] = entry;
        }
        while self.stages.len() < 5 {
            self.stages.push(template.zeros_like());
        }
    }

    /// Advance `state` by `h`. Deterministic systems accept negative `h`.
    pub fn step(&mut self, state: &mut SpdeState<F>, h: f64) -> Result<()> {
        if !(h.is_finite() && h != 0.0) || (h < 0.0 && (state.nu > 0.0 || self.noise.is_some())) {
            return Err(Error::InvalidParameter(format!("invalid step size {h}")));
        }
        self.ws_check(&state.field)?;
        self.prepare(&state.field, h, state.nu, state.delta, state.galerkin);
        let galerkin = state.galerkin;
        let factors = &self.factors[self.current];
        let u = &mut state.field;
        if self.ctrl.nonlinear {
            let [k1, k2, k3, k4, a] = &mut self.stages[..] else {
                unreachable!("five stage buffers")
            };
            match self.ctrl.scheme {
                Scheme::IntegratingFactorRk4 => {
                    let half = &factors.half;
                    u.tendency_into(&mut self.ws, galerkin, k1)?;
                    copy_into(a, u);
                    a.axpy(0.5 * h, k1);
                    a.scale_modes(half);
                    a.tendency_into(&mut self.ws, galerkin, k2)?;
                    // a = E(h/2) u + h/2 k2
                    copy_into(a, u);
                    a.scale_modes(half);
                    a.axpy(0.5 * h, k2);
                    a.tendency_into(&mut self.ws, galerkin, k3)?;
                    // a = E(h/2) (E(h/2) u + h k3) = E(h) u + h E(h/2) k3
                    a.axpy(-0.5 * h, k2);
                    a.axpy(h, k3);
                    a.scale_modes(half);
                    a.tendency_into(&mut self.ws, galerkin, k4)?;
                    // u' = E(h/2)(E(h/2)(u + h/6 k1) + h/3 (k2 + k3)) + h/6 k4
                    u.axpy(h / 6.0, k1);
                    u.scale_modes(half);
                    u.axpy(h / 3.0, k2);
                    u.axpy(h / 3.0, k3);
                    u.scale_modes(half);
                    u.axpy(h / 6.0, k4);
                }
                Scheme::ExponentialEuler => {
                    u.tendency_into(&mut self.ws, galerkin, k1)?;
                    u.axpy(h, k1);
                    u.scale_modes(&factors.full);
                }
            }
        } else {
            u.scale_modes(&factors.full);
        }
        if let Some(ou) = &factors.noise {
            ou.add_increment(u, &mut state.rng);
        }
        state.time += h;
        guard(&state.field, state.time)
    }

    fn ws_check(&self, field: &F) -> Result<()> {
        if self.ws.grid().same_shape(field.grid()) {
            Ok(())
        } else {
            Err(Error::Resolution("field grid does not match the stepper grid".into()))
        }
    }
}

fn copy_into<F: SpectralField>(dst: &mut F, src: &F) {
    for (d, s) in dst.components_mut().iter_mut().zip(src.components()) {
        d.copy_from_slice(s);
    }
}

fn guard<F: SpectralField>(field: &F, time: f64) -> Result<()> {
    let l2 = sobolev_norm_sq(field, SobolevIndex::homogeneous(0.0)).sqrt();
    if !field.is_finite() || !l2.is_finite() {
        return Err(Error::Instability {
            time,
            detail: "non-finite coefficients (CFL violated?)".into(),
        });
    }
    if l2 > OVERFLOW_GUARD {
        return Err(Error::Instability {
            time,
            detail: format!("L2 norm {l2:.3e} exceeds guard {OVERFLOW_GUARD:e}"),
        });
    }
    Ok(())
}

/// One RK4 step of 2D Euler in vorticity form.
pub fn euler_step_2d(xi: &Vorticity2D, dt: f64) -> Result<Vorticity2D> {
    let mut stepper = Stepper::new(Arc::clone(xi.grid()), StepControl::default(), None)?;
    let mut state = SpdeState::new(xi.clone(), 0.0, 1.0, None, RngStream::new(0, 0))?;
    stepper.step(&mut state, dt)?;
    Ok(state.field)
}

/// One RK4 step of the Galerkin-truncated 3D Euler system on `|n| ≤ N`.
pub fn euler_step_3d_galerkin(u: &Velocity, dt: f64, radius: f64) -> Result<Velocity> {
    let mut stepper = Stepper::new(Arc::clone(u.grid()), StepControl::default(), None)?;
    let mut state = SpdeState::new(u.clone(), 0.0, 1.0, Some(radius), RngStream::new(0, 0))?;
    stepper.step(&mut state, dt)?;
    Ok(state.field)
}

fn spde_step<F: Flow>(state: &SpdeState<F>, h: f64, ctrl: &StepControl, spectrum: &NoiseSpectrum) -> Result<SpdeState<F>> {
    if !(h > 0.0 && state.nu > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "stochastic steps need h > 0 and nu > 0 (got h={h}, nu={})",
            state.nu
        )));
    }
    let mut stepper = Stepper::new(Arc::clone(state.field.grid()), ctrl.clone(), Some(spectrum.clone()))?;
    let mut next = state.clone();
    stepper.step(&mut next, h)?;
    Ok(next)
}

/// One step of the stochastic hyperviscous 2D system.
pub fn spde_step_2d(
    state: &SpdeState<Vorticity2D>,
    h: f64,
    ctrl: &StepControl,
    spectrum: &NoiseSpectrum,
) -> Result<SpdeState<Vorticity2D>> {
    spde_step(state, h, ctrl, spectrum)
}

/// One step of the stochastic hyperviscous 3D Galerkin system with the
/// forcing projected onto `|n| ≤ N`.
pub fn spde_step_3d(
    state: &SpdeState<Velocity>,
    h: f64,
    ctrl: &StepControl,
    spectrum: &NoiseSpectrum,
) -> Result<SpdeState<Velocity>> {
    spde_step(state, h, ctrl, spectrum)
}

/// CFL step for a field under the given control.
pub fn cfl_dt<F: Flow>(field: &F, ctrl: &StepControl) -> Result<f64> {
    Stepper::<F>::new(Arc::clone(field.grid()), ctrl.clone(), None)?.cfl_dt(field)
}

/// Periodic callback during [`integrate`].
pub trait Observer<F> {
    /// Sampling interval `Δ`; callbacks fire at the absolute times `kΔ`.
    fn interval(&self) -> f64;

    fn observe(&mut self, state: &SpdeState<F>) -> Result<ControlFlow<()>>;
}

/// Closure-backed observer.
pub struct Every<G> {
    interval: f64,
    callback: G,
}

impl<G> Every<G> {
    pub fn new(interval: f64, callback: G) -> Self {
        Every { interval, callback }
    }
}

impl<F, G> Observer<F> for Every<G>
where
    G: FnMut(&SpdeState<F>) -> Result<ControlFlow<()>>,
{
    fn interval(&self) -> f64 {
        self.interval
    }

    fn observe(&mut self, state: &SpdeState<F>) -> Result<ControlFlow<()>> {
        (self.callback)(state)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Completion {
    ReachedEnd,
    /// An observer asked to stop.
    Stopped,
}

/// Step `state` until `t_end`, landing exactly on every observer time `kΔ`
/// in `[state.time, t_end]` and on `t_end`.
///
/// Segment endpoints are observation instants of both segments, and a run
/// split at an observation time reproduces the unsplit run bit-for-bit.
pub fn integrate<F: Flow>(
    stepper: &mut Stepper<F>,
    state: &mut SpdeState<F>,
    t_end: f64,
    observers: &mut [&mut dyn Observer<F>],
) -> Result<Completion> {
    if t_end < state.time {
        return Err(Error::InvalidParameter(format!(
            "end time {t_end} precedes the current time {}",
            state.time
        )));
    }
    let mut next: Vec<u64> = Vec::with_capacity(observers.len());
    for obs in observers.iter() {
        let dt = obs.interval();
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("observer interval must be positive, got {dt}")));
        }
        next.push((state.time / dt - 1e-9).ceil().max(0.0) as u64);
    }
    let at = |k: u64, dt: f64| k as f64 * dt;
    loop {
        let mut stop = false;
        for (i, obs) in observers.iter_mut().enumerate() {
            let dt = obs.interval();
            if at(next[i], dt) <= state.time {
                if obs.observe(state)?.is_break() {
                    stop = true;
                }
                next[i] += 1;
            }
        }
        if stop {
            return Ok(Completion::Stopped);
        }
        if state.time >= t_end {
            return Ok(Completion::ReachedEnd);
        }
        let mut event = t_end;
        for (i, obs) in observers.iter().enumerate() {
            event = event.min(at(next[i], obs.interval()));
        }
        let h = stepper.ladder_dt(&state.field)?;
        let remaining = event - state.time;
        if h >= remaining * (1.0 - 1e-12) {
            stepper.step(state, remaining)?;
            state.time = event;
        } else {
            stepper.step(state, h)?;
        }
    }
}

/// First observed time (checked every `check`) at which
/// `‖u(t)‖_{H^σ} ≥ 2 ‖u₀‖_{H^σ}` under the deterministic flow, or `None`
/// if that does not happen before `horizon`.
pub fn doubling_time<F: Flow>(
    u0: &F,
    sigma: f64,
    horizon: f64,
    check: f64,
    ctrl: &StepControl,
    galerkin: Option<f64>,
) -> Result<Option<f64>> {
    let idx = SobolevIndex::inhomogeneous(sigma);
    let n0 = u0.velocity_norm_sq(idx).sqrt();
    if n0 <= 0.0 {
        return Err(Error::InvalidParameter("doubling time needs a nonzero initial field".into()));
    }
    let mut ctrl = ctrl.clone();
    ctrl.nonlinear = true;
    let mut stepper = Stepper::new(Arc::clone(u0.grid()), ctrl, None)?;
    let mut state = SpdeState::new(u0.clone(), 0.0, 1.0, galerkin, RngStream::new(0, 0))?;
    let mut hit = None;
    let mut obs = Every::new(check, |s: &SpdeState<F>| {
        if s.field.velocity_norm_sq(idx).sqrt() >= 2.0 * n0 {
            hit = Some(s.time);
            Ok(ControlFlow::Break(()))
        } else {
            Ok(ControlFlow::Continue(()))
        }
    });
    integrate(&mut stepper, &mut state, horizon, &mut [&mut obs])?;
    Ok(hit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forcing::SpectrumKind;

    fn grid(dim: usize, m: usize) -> Arc<ModeGrid> {
        Arc::new(ModeGrid::new(dim, m).unwrap())
    }

    #[test]
    fn cfl_examples() {
        let g = grid(2, 64);
        let ctrl = StepControl {
            c_cfl: 0.5,
            h_max: 1.0,
            ..StepControl::default()
        };
        let zero = Vorticity2D::zeros(Arc::clone(&g));
        assert_eq!(cfl_dt(&zero, &ctrl).unwrap(), 1.0);
        // u = (0, sin x1) has ξ = cos x1
        let mut xi = Vorticity2D::zeros(Arc::clone(&g));
        xi.set_mode([1, 0], C64::new(0.5, 0.0));
        let dt = cfl_dt(&xi, &ctrl).unwrap();
        let expect = 0.5 * (std::f64::consts::TAU / 64.0);
        assert!((dt - expect).abs() < 1e-14 * expect);

        let mut fine = Vorticity2D::zeros(grid(2, 128));
        fine.set_mode([1, 0], C64::new(0.5, 0.0));
        let dt_fine = cfl_dt(&fine, &ctrl).unwrap();
        assert!((dt_fine - dt / 2.0).abs() < 1e-14);
    }

    #[test]
    fn eigenfunction_is_stationary() {
        let g = grid(2, 32);
        let mut xi = Vorticity2D::zeros(Arc::clone(&g));
        // sin x1 sin x2
        xi.set_mode([1, 1], C64::new(-0.25, 0.0));
        xi.set_mode([1, -1], C64::new(0.25, 0.0));
        let out = euler_step_2d(&xi, 0.1).unwrap();
        for &idx in g.modes() {
            assert!((out.coeffs()[idx] - xi.coeffs()[idx]).norm() < 1e-15);
        }
    }

    #[test]
    fn hyperviscous_decay_of_a_single_mode() {
        let g = grid(2, 16);
        let mut xi = Vorticity2D::zeros(Arc::clone(&g));
        xi.set_mode([2, 1], C64::new(0.3, -0.1));
        let spectrum = NoiseSpectrum::new(Arc::clone(&g), SpectrumKind::Shell { radius: 1.0, amplitude: 0.0 }).unwrap();
        let state = SpdeState::new(xi.clone(), 0.2, 0.5, None, RngStream::new(3, 0)).unwrap();
        let h = 0.01;
        let next = spde_step_2d(&state, h, &StepControl::default(), &spectrum).unwrap();
        let factor = (-0.2 * h * 5f64.powf(1.5)).exp();
        let got = next.field.mode([2, 1]);
        assert!((got - xi.mode([2, 1]) * factor).norm() < 1e-15);
    }

    #[test]
    fn zero_noise_matches_deterministic_stepper() {
        let g = grid(2, 16);
        let mut xi = Vorticity2D::zeros(Arc::clone(&g));
        xi.set_mode([1, 0], C64::new(0.4, 0.1));
        xi.set_mode([1, 2], C64::new(-0.2, 0.3));
        xi.set_mode([3, -1], C64::new(0.1, 0.0));
        let zero = NoiseSpectrum::new(Arc::clone(&g), SpectrumKind::Shell { radius: 1.0, amplitude: 0.0 }).unwrap();
        let ctrl = StepControl::default();
        let mut a = SpdeState::new(xi.clone(), 0.05, 0.5, None, RngStream::new(1, 0)).unwrap();
        let mut b = a.clone();
        let mut noisy = Stepper::new(Arc::clone(&g), ctrl.clone(), Some(zero)).unwrap();
        let mut plain = Stepper::new(Arc::clone(&g), ctrl, None).unwrap();
        for _ in 0..5 {
            noisy.step(&mut a, 0.01).unwrap();
            plain.step(&mut b, 0.01).unwrap();
        }
        for &idx in g.modes() {
            assert_eq!(a.field.coeffs()[idx], b.field.coeffs()[idx]);
        }
    }

    #[test]
    fn stochastic_step_rejects_bad_arguments() {
        let g = grid(2, 16);
        let s = NoiseSpectrum::new(Arc::clone(&g), SpectrumKind::Shell { radius: 1.0, amplitude: 1.0 }).unwrap();
        let state = SpdeState::new(Vorticity2D::zeros(Arc::clone(&g)), 0.0, 0.5, None, RngStream::new(1, 0)).unwrap();
        assert!(spde_step_2d(&state, 0.1, &StepControl::default(), &s).is_err());
        assert!(SpdeState::new(Vorticity2D::zeros(g), 0.1, -0.1, None, RngStream::new(1, 0)).is_err());
    }

    #[test]
    fn observer_count_and_identity() {
        let g = grid(2, 16);
        let mut xi = Vorticity2D::zeros(Arc::clone(&g));
        xi.set_mode([1, 0], C64::new(0.5, 0.0));
        let mut stepper = Stepper::new(Arc::clone(&g), StepControl::default(), None).unwrap();
        let mut state = SpdeState::new(xi.clone(), 0.0, 0.5, None, RngStream::new(1, 0)).unwrap();
        integrate(&mut stepper, &mut state, 0.0, &mut []).unwrap();
        assert_eq!(state.field.coeffs(), xi.coeffs());

        let mut count = 0usize;
        let mut obs = Every::new(0.3, |_: &SpdeState<Vorticity2D>| {
            count += 1;
            Ok(ControlFlow::Continue(()))
        });
        integrate(&mut stepper, &mut state, 2.0, &mut [&mut obs]).unwrap();
        assert_eq!(count, (2.0f64 / 0.3).floor() as usize + 1);
        assert_eq!(state.time, 2.0);
    }

    #[test]
    fn overflow_guard_trips() {
        let g = grid(2, 16);
        let mut xi = Vorticity2D::zeros(Arc::clone(&g));
        xi.set_mode([1, 0], C64::new(1e13, 0.0));
        let err = euler_step_2d(&xi, 1e-3).unwrap_err();
        assert!(matches!(err, Error::Instability { .. }));
    }

    #[test]
    fn galerkin_projection_on_entry() {
        let g = grid(3, 16);
        let mut u = Velocity::zeros(Arc::clone(&g));
        u.set_mode([3, 0, 0], &[C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        u.set_mode([1, 0, 0], &[C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.5, 0.0)]);
        let out = euler_step_3d_galerkin(&u, 0.01, 2.0).unwrap();
        for &idx in g.modes() {
            if g.k2(idx) > 4.0 {
                assert_eq!(out.mode_energy(idx), 0.0);
            }
        }
        assert!(out.mode_energy(g.index_of([1, 0, 0]).unwrap()) > 0.0);
    }

    #[test]
    fn ladder_steps_stay_below_cfl() {
        for dt in [1e-4, 0.0123, 0.049, 0.05, 0.3] {
            let h = ladder_step(dt, 0.05);
            assert!(h <= dt.min(0.05));
            assert!(h > dt.min(0.05) * 0.8);
        }
    }
}
