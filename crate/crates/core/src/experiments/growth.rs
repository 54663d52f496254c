//! Long-time growth of `‖u(t)‖_{H^σ}` under the deterministic flow.

use std::any::Any;
use std::ops::ControlFlow;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use super::{resample, run_stationary, snapshot_schedule, Setup};
use crate::dynamics::{integrate, Every, Flow, SpdeState, Stepper};
use crate::ensemble::run_members;
use crate::error::Result;
use crate::field::{SobolevIndex, Vorticity2D};
use crate::grid::ModeGrid;
use crate::report::{fmt_f64, ReportSet};
use crate::rng::RngStream;
use crate::spectral::linf_grad_vorticity;
use crate::stats::{linear_fit, Check, Verdict};

/// Observation interval of the norm series.
pub const SERIES_DT: f64 = 0.125;

/// `(σ−1)/(s+1−σ)` with `s = 2+δ`.
pub fn alpha_star_2d(sigma: f64, delta: f64) -> f64 {
    let s = 2.0 + delta;
    (sigma - 1.0) / (s + 1.0 - sigma)
}

/// `σ/(2s−σ)`.
pub fn alpha_star_3d(sigma: f64, s: f64) -> f64 {
    sigma / (2.0 * s - sigma)
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthRecord {
    pub sample: usize,
    /// Time of the stationary snapshot used as initial datum.
    pub initial_time: f64,
    pub times: Vec<f64>,
    pub h_sigma: Vec<f64>,
    pub running_max: Vec<f64>,
    /// `‖∇ξ‖_{L∞}` along `times`; empty in 3D.
    pub grad_vorticity_linf: Vec<f64>,
    /// Dyadic checkpoints `2^j` reached.
    pub checkpoints: Vec<f64>,
    pub alpha_hat: Option<f64>,
    pub alpha_star: f64,
    pub verdict: Verdict,
    /// Set when the run aborted before the horizon.
    pub error: Option<String>,
}

impl GrowthRecord {
    pub fn running_max_monotone(&self) -> bool {
        self.running_max.windows(2).all(|w| w[1] >= w[0])
    }

    fn max_at(&self, t: f64) -> Option<f64> {
        let i = self.times.iter().position(|&x| (x - t).abs() <= 1e-9 * t.max(1.0))?;
        Some(self.running_max[i])
    }
}

/// Log-log slope of the running maximum over the last three dyadic
/// intervals, or `None` with fewer than three.
pub fn fit_alpha(rec: &GrowthRecord) -> Option<f64> {
    let n = rec.checkpoints.len();
    if n < 4 {
        return None;
    }
    let pts: Vec<(f64, f64)> = rec.checkpoints[n - 4..]
        .iter()
        .filter_map(|&t| rec.max_at(t).map(|m| (t.ln(), m.ln())))
        .collect();
    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    linear_fit(&x, &y).ok().map(|(slope, _)| slope)
}

fn dyadic_until(horizon: f64) -> Vec<f64> {
    (0..).map(|j| 2f64.powi(j)).take_while(|&t| t <= horizon * (1.0 + 1e-12)).collect()
}

/// Deterministic evolution of each initial datum to the configured horizon.
pub fn run_growth<F: Flow + 'static>(setup: &Setup, initial: &[(f64, F)]) -> Result<Vec<GrowthRecord>> {
    let cfg = &setup.cfg;
    let g = &cfg.growth;
    let grid = Arc::new(ModeGrid::new(cfg.dimension, g.grid)?);
    let alpha_star = if cfg.dimension == 2 {
        alpha_star_2d(g.sigma, cfg.delta)
    } else {
        alpha_star_3d(g.sigma, cfg.s)
    };
    let idx = SobolevIndex::inhomogeneous(g.sigma);
    let checkpoints = dyadic_until(g.horizon);
    let mut ctrl = cfg.step.clone();
    ctrl.nonlinear = true;
    run_members(initial.len(), setup.exec, |i| {
        let (t0, ref f0) = initial[i];
        let u0 = resample(f0, &grid)?;
        let mut rec = GrowthRecord {
            sample: i,
            initial_time: t0,
            times: Vec::new(),
            h_sigma: Vec::new(),
            running_max: Vec::new(),
            grad_vorticity_linf: Vec::new(),
            checkpoints: Vec::new(),
            alpha_hat: None,
            alpha_star,
            verdict: Verdict::Evidence,
            error: None,
        };
        let mut stepper = Stepper::new(Arc::clone(&grid), ctrl.clone(), None)?;
        let mut state = SpdeState::new(u0, 0.0, cfg.delta, cfg.galerkin_radius(), RngStream::new(0, 0))?;
        let mut best = 0.0f64;
        let mut obs = Every::new(SERIES_DT, |s: &SpdeState<F>| {
            let v = s.field.velocity_norm_sq(idx).sqrt();
            best = best.max(v);
            rec.times.push(s.time);
            rec.h_sigma.push(v);
            rec.running_max.push(best);
            if let Some(xi) = (&s.field as &dyn Any).downcast_ref::<Vorticity2D>() {
                rec.grad_vorticity_linf.push(linf_grad_vorticity(xi));
            }
            Ok(ControlFlow::Continue(()))
        });
        let res = integrate(&mut stepper, &mut state, g.horizon, &mut [&mut obs]);
        if let Err(e) = res {
            rec.error = Some(e.to_string());
        }
        let reached = rec.times.last().copied().unwrap_or(0.0);
        rec.checkpoints = checkpoints.iter().copied().filter(|&t| t <= reached * (1.0 + 1e-12)).collect();
        rec.alpha_hat = fit_alpha(&rec);
        rec.verdict = match rec.alpha_hat {
            Some(a) if a > alpha_star + g.alpha_tolerance => Verdict::EvidenceAgainst,
            _ => Verdict::Evidence,
        };
        Ok(rec)
    })
}

/// Sample initial data from the stationary run at the smallest viscosity,
/// evolve them, and write `growth.csv`, `growth.jsonl`, `growth_series.csv`.
pub fn run_growth_experiment<F: Flow + 'static>(
    setup: &Setup,
    out: Option<&Path>,
    hash: &str,
) -> Result<Vec<GrowthRecord>> {
    let cfg = &setup.cfg;
    let nu = *cfg.nu.last().expect("validated non-empty");
    let t_end = cfg.t_end(nu);
    let gap = cfg.growth.spacing_decorrelations * cfg.decorrelation_time(nu);
    let sched = snapshot_schedule(cfg, t_end, cfg.growth.samples, gap)?;
    let st = run_stationary::<F>(setup, nu, t_end, 1, &sched)?;
    let initial: Vec<(f64, F)> = st.snapshots().cloned().collect();
    let records = run_growth(setup, &initial)?;
    if let Some(dir) = out {
        write_growth(dir, hash, &records)?;
    }
    Ok(records)
}

pub fn growth_checks(records: &[GrowthRecord]) -> Vec<Check> {
    let mut v = Vec::new();
    for r in records {
        v.push(Check {
            quantity: format!("alpha_hat_sample_{}", r.sample),
            estimate: r.alpha_hat.unwrap_or(f64::NAN),
            ci_half_width: 0.0,
            target: r.alpha_star,
            verdict: r.verdict,
        });
    }
    let monotone = records.iter().all(GrowthRecord::running_max_monotone);
    v.push(Check {
        quantity: "running_max_monotone".into(),
        estimate: records.iter().filter(|r| r.running_max_monotone()).count() as f64,
        ci_half_width: 0.0,
        target: records.len() as f64,
        verdict: Verdict::from_bool(monotone),
    });
    v
}

pub fn write_growth(dir: &Path, hash: &str, records: &[GrowthRecord]) -> Result<()> {
    let mut r = ReportSet::create(dir, "growth", hash)?;
    for c in growth_checks(records) {
        r.check(&c)?;
    }
    let mut t = r.series(
        "growth_series",
        &["sample", "time", "h_sigma", "running_max", "grad_vorticity_linf"],
    )?;
    for rec in records {
        r.log.event("record", rec)?;
        for (i, &time) in rec.times.iter().enumerate() {
            let gv = rec.grad_vorticity_linf.get(i).copied().map_or_else(String::new, fmt_f64);
            t.row(&[
                rec.sample.to_string(),
                fmt_f64(time),
                fmt_f64(rec.h_sigma[i]),
                fmt_f64(rec.running_max[i]),
                gv,
            ])?;
        }
    }
    Ok(())
}
