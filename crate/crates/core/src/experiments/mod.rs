//! Experiment drivers. Each is a pure function of `(config, seed)`.

use std::ops::ControlFlow;
use std::path::Path;
use std::sync::Arc;

use crate::config::ExperimentConfig;
use crate::dynamics::{integrate, Every, Flow, SpdeState, Stepper};
use crate::ensemble::{run_members, Execution};
use crate::error::{Error, Result};
use crate::field::{Velocity, Vorticity2D, C64};
use crate::forcing::{sample_stationary_linear, NoiseSpectrum};
use crate::grid::ModeGrid;
use crate::report::ReportSet;
use crate::rng::RngStream;
use crate::stats::{AccumulatorSpec, Check, Measurer, MomentAccumulator, Verdict};

pub mod bourgain;
pub mod growth;
pub mod probe3d;
pub mod simulate;
pub mod sweep;
pub mod verify;

pub use bourgain::{run_bourgain_set_estimate, BourgainCell, BourgainTable};
pub use growth::{alpha_star_2d, alpha_star_3d, run_growth, run_growth_experiment, GrowthRecord};
pub use probe3d::{run_3d_alternative_probe, ProbeRow};
pub use simulate::{run_simulate, SimulateSummary};
pub use sweep::{run_viscosity_sweep, SweepRow, SweepTable};
pub use verify::{verify_invariants, SuiteReport};

/// Labels separating the random streams of different purposes.
pub mod streams {
    pub const INITIAL: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const VERIFY: u64 = 3;
    pub const GROWTH: u64 = 4;
    pub const BOURGAIN: u64 = 5;
}

/// Resolved grid and forcing for a config.
#[derive(Debug, Clone)]
pub struct Setup {
    pub cfg: ExperimentConfig,
    pub grid: Arc<ModeGrid>,
    /// Forcing, projected onto the Galerkin ball in 3D.
    pub spectrum: NoiseSpectrum,
    pub exec: Execution,
}

impl Setup {
    pub fn new(cfg: ExperimentConfig, exec: Execution) -> Result<Self> {
        cfg.validate()?;
        let grid = Arc::new(ModeGrid::new(cfg.dimension, cfg.grid)?);
        let mut spectrum = NoiseSpectrum::new(Arc::clone(&grid), cfg.spectrum.clone())?;
        if let Some(n) = cfg.galerkin_radius() {
            spectrum = spectrum.truncated(n);
        }
        Ok(Setup {
            cfg,
            grid,
            spectrum,
            exec,
        })
    }

    pub fn accumulator_spec(&self) -> AccumulatorSpec {
        let mut spec = AccumulatorSpec::for_spectrum(&self.spectrum, self.cfg.delta, self.cfg.sigma.clone());
        if let Some(g) = self.cfg.gamma {
            spec.gamma = g;
        }
        spec
    }
}

pub fn zero_field<F: Flow>(grid: &Arc<ModeGrid>) -> F {
    let comps = vec![vec![C64::new(0.0, 0.0); grid.len()]; F::component_count(grid.dim())];
    F::from_components(Arc::clone(grid), comps)
}

/// Copy every mode of `f` that exists on `grid` (zero-padding or truncation).
pub fn resample<F: Flow>(f: &F, grid: &Arc<ModeGrid>) -> Result<F> {
    let src = f.grid();
    if src.dim() != grid.dim() {
        return Err(Error::Resolution("cannot resample across dimensions".into()));
    }
    let mut comps = vec![vec![C64::new(0.0, 0.0); grid.len()]; f.components().len()];
    for &idx in src.modes() {
        if let Some(t) = grid.index_of(src.wavevector(idx)) {
            for (dst, s) in comps.iter_mut().zip(f.components()) {
                dst[t] = s[idx];
            }
        }
    }
    Ok(F::from_components(Arc::clone(grid), comps))
}

/// One member's stationary run.
#[derive(Debug, Clone)]
pub struct MemberRun<F> {
    pub acc: MomentAccumulator,
    /// Snapshots `(time, field)` at the requested sample indices.
    pub snapshots: Vec<(f64, F)>,
    /// `‖N(u)‖_{L²} / ‖u‖_{L²}` at each recorded sample, in sample order.
    pub transport_ratio: Vec<f64>,
    pub final_state: SpdeState<F>,
}

/// Merged outcome of a stationary ensemble.
#[derive(Debug, Clone)]
pub struct Stationary<F> {
    pub acc: MomentAccumulator,
    pub members: Vec<MemberRun<F>>,
    pub nu: f64,
    pub t_end: f64,
}

impl<F> Stationary<F> {
    pub fn transport_ratios(&self) -> Vec<f64> {
        self.members.iter().flat_map(|m| m.transport_ratio.iter().copied()).collect()
    }

    pub fn snapshots(&self) -> impl Iterator<Item = &(f64, F)> {
        self.members.iter().flat_map(|m| m.snapshots.iter())
    }
}

/// Run `members` independent trajectories of the stochastic system at
/// viscosity `nu` up to `t_end`, each started from the exact stationary law
/// of the linear equation. Samples are recorded every `sample_every` after
/// the burn-in; snapshots are kept at the given sample indices `k`
/// (time `k · sample_every`).
pub fn run_stationary<F: Flow>(
    setup: &Setup,
    nu: f64,
    t_end: f64,
    members: usize,
    snapshot_indices: &[u64],
) -> Result<Stationary<F>> {
    let cfg = &setup.cfg;
    let spec = setup.accumulator_spec();
    let measurer = Measurer::new(&setup.spectrum, cfg.delta, &cfg.sigma);
    let dt_sample = cfg.sample_every;
    let start = cfg.burn_in * t_end;
    let run = |m: usize| -> Result<MemberRun<F>> {
        let tag = nu.to_bits();
        let mut init_rng = RngStream::derive(cfg.seed, &[streams::INITIAL, tag, m as u64]);
        let field = sample_stationary_linear(&zero_field::<F>(&setup.grid), &setup.spectrum, cfg.delta, &mut init_rng);
        let noise = RngStream::derive(cfg.seed, &[streams::NOISE, tag, m as u64]);
        let mut state = SpdeState::new(field, nu, cfg.delta, cfg.galerkin_radius(), noise)?;
        let mut stepper = Stepper::new(Arc::clone(&setup.grid), cfg.step.clone(), Some(setup.spectrum.clone()))?;
        let mut acc = MomentAccumulator::new(spec.clone());
        let mut snapshots = Vec::new();
        let mut ratios = Vec::new();
        let mut ws = crate::spectral::Workspace::new(Arc::clone(&setup.grid));
        let mut tend = zero_field::<F>(&setup.grid);
        let mut obs = Every::new(dt_sample, |s: &SpdeState<F>| {
            let k = (s.time / dt_sample).round() as u64;
            if snapshot_indices.contains(&k) {
                snapshots.push((s.time, s.field.clone()));
            }
            if s.time >= start * (1.0 - 1e-12) {
                acc.insert((m as u64, k), measurer.measure(&s.field))?;
                s.field.tendency_into(&mut ws, s.galerkin, &mut tend)?;
                let a = crate::field::sobolev_norm_sq(&tend, crate::field::SobolevIndex::homogeneous(0.0));
                let b = crate::field::sobolev_norm_sq(&s.field, crate::field::SobolevIndex::homogeneous(0.0));
                ratios.push(if b > 0.0 { (a / b).sqrt() } else { 0.0 });
            }
            Ok(ControlFlow::Continue(()))
        });
        integrate(&mut stepper, &mut state, t_end, &mut [&mut obs])
            .map_err(|e| e.context(format!("stationary run nu={nu} member {m}")))?;
        Ok(MemberRun {
            acc,
            snapshots,
            transport_ratio: ratios,
            final_state: state,
        })
    };
    let runs = run_members(members, setup.exec, run)?;
    let mut acc = MomentAccumulator::new(spec);
    for r in &runs {
        acc = acc.merge(r.acc.clone())?;
    }
    Ok(Stationary {
        acc,
        members: runs,
        nu,
        t_end,
    })
}

/// `count` sample indices spread over the post-burn-in window, at least
/// `min_gap` apart in time.
pub fn snapshot_schedule(cfg: &ExperimentConfig, t_end: f64, count: usize, min_gap: f64) -> Result<Vec<u64>> {
    let start = cfg.burn_in * t_end;
    let window = t_end - start;
    if count == 0 {
        return Ok(Vec::new());
    }
    let gap = window / count as f64;
    if gap < min_gap {
        return Err(Error::InvalidParameter(format!(
            "{count} snapshots need a window of {:.3} but only {window:.3} follows the burn-in",
            min_gap * count as f64
        )));
    }
    Ok((1..=count)
        .map(|i| ((start + gap * i as f64) / cfg.sample_every).round() as u64)
        .collect())
}

/// Subcommands of the driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Verify,
    Simulate,
    Sweep,
    Growth,
    Bourgain,
    Probe3d,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Verify,
        Command::Simulate,
        Command::Sweep,
        Command::Growth,
        Command::Bourgain,
        Command::Probe3d,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Simulate => "simulate",
            Command::Sweep => "sweep",
            Command::Growth => "growth",
            Command::Bourgain => "bourgain",
            Command::Probe3d => "probe3d",
        }
    }
}

impl std::str::FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown subcommand {s:?}")))
    }
}

/// Run one subcommand and write its outputs under `out`. Returns the
/// checks it produced; failed verdicts are data, not errors.
pub fn dispatch(cmd: Command, setup: &Setup, out: &Path) -> Result<Vec<Check>> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let hash = setup.cfg.hash();
    let three = setup.cfg.dimension == 3;
    let checks = match cmd {
        Command::Verify => {
            let suite = verify_invariants(setup)?;
            let mut r = ReportSet::create(out, "verify", &hash)?;
            for c in &suite.checks {
                r.check(c)?;
            }
            suite.checks
        }
        Command::Simulate => {
            let s = if three {
                run_simulate::<Velocity>(setup, Some(out), &hash)?
            } else {
                run_simulate::<Vorticity2D>(setup, Some(out), &hash)?
            };
            s.checks().map(|(nu, c)| relabel(c, nu)).collect()
        }
        Command::Sweep => {
            let t = if three {
                run_viscosity_sweep::<Velocity>(setup, Some(out), &hash)?
            } else {
                run_viscosity_sweep::<Vorticity2D>(setup, Some(out), &hash)?
            };
            let mut v: Vec<Check> = t
                .rows
                .iter()
                .flat_map(|r| r.analysis.checks.iter().map(|c| relabel(c, r.nu)))
                .collect();
            v.push(t.uniform_targets);
            v
        }
        Command::Growth => {
            let recs = if three {
                run_growth_experiment::<Velocity>(setup, Some(out), &hash)?
            } else {
                run_growth_experiment::<Vorticity2D>(setup, Some(out), &hash)?
            };
            growth::growth_checks(&recs)
        }
        Command::Bourgain => {
            let t = if three {
                run_bourgain_set_estimate::<Velocity>(setup, Some(out), &hash)?
            } else {
                run_bourgain_set_estimate::<Vorticity2D>(setup, Some(out), &hash)?
            };
            bourgain::bourgain_checks(&t)
        }
        Command::Probe3d => {
            let rows = run_3d_alternative_probe(setup, Some(out), &hash)?;
            rows.iter()
                .map(|r| Check {
                    quantity: format!("mean_h1_delta_sq[nu={},N={}]", r.nu, r.galerkin),
                    estimate: r.mean_h1_delta,
                    ci_half_width: r.mean_h1_delta_ci,
                    target: r.b0_half,
                    verdict: Verdict::Evidence,
                })
                .collect()
        }
    };
    Ok(checks)
}

fn relabel(c: &Check, nu: f64) -> Check {
    let mut c = c.clone();
    c.quantity = simulate::labelled(&c.quantity, nu);
    c
}
