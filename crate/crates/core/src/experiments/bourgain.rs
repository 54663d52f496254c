//! Exit fractions from the Bourgain good sets `G_{λ,T}`.
//!
//! A datum leaves `G_{λ,T}` when `‖u(nτ)‖_{H^σ} > λ` at some checkpoint
//! `n ≤ T/τ`, with `τ = c/λ` and `c` the measured doubling constant.

use std::ops::ControlFlow;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use super::{run_stationary, Setup};
use crate::dynamics::{doubling_time, integrate, Every, Flow, SpdeState, Stepper};
use crate::ensemble::run_members;
use crate::error::{Error, Result};
use crate::field::SobolevIndex;
use crate::report::{fmt_f64, ReportSet};
use crate::rng::RngStream;
use crate::stats::{Check, Observable, Verdict};

/// Checkpoint spacing of the doubling-time search, relative to its horizon.
const DOUBLING_CHECKS: f64 = 2000.0;

#[derive(Debug, Clone, Serialize)]
pub struct BourgainCell {
    pub lambda: f64,
    pub horizon: f64,
    pub tau: f64,
    pub checkpoints: usize,
    pub members: usize,
    pub exit_fraction: f64,
    /// Fraction of all checkpoint norms above `λ`, pooled over the cell.
    pub pooled_tail: f64,
    /// `P(‖u‖_{H^σ} > λ)` under the stationary samples.
    pub stationary_tail: f64,
    /// `(⌊T/τ⌋+1) · pooled_tail`.
    pub bound: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct BourgainTable {
    pub sigma: f64,
    /// Doubling constant `c`.
    pub doubling_constant: f64,
    /// `(τ_double, ‖u₀‖_{H^σ})` per probe; `τ_double` is `None` when the
    /// norm did not double before the horizon.
    pub doubling_probes: Vec<(Option<f64>, f64)>,
    pub cells: Vec<BourgainCell>,
}

pub const CELL_COLUMNS: [&str; 10] = [
    "lambda",
    "horizon",
    "tau",
    "checkpoints",
    "members",
    "exit_fraction",
    "pooled_tail",
    "stationary_tail",
    "bound",
    "verdict",
];

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Norms `‖u(nτ)‖_{H^σ}`, `n = 0..=count-1`, under the deterministic flow.
fn checkpoint_norms<F: Flow>(setup: &Setup, u0: &F, tau: f64, count: usize, sigma: f64) -> Result<Vec<f64>> {
    let idx = SobolevIndex::inhomogeneous(sigma);
    let mut ctrl = setup.cfg.step.clone();
    ctrl.nonlinear = true;
    let mut stepper = Stepper::new(Arc::clone(u0.grid()), ctrl, None)?;
    let mut state = SpdeState::new(u0.clone(), 0.0, setup.cfg.delta, setup.cfg.galerkin_radius(), RngStream::new(0, 0))?;
    let mut norms = Vec::with_capacity(count);
    let mut obs = Every::new(tau, |s: &SpdeState<F>| {
        norms.push(s.field.velocity_norm_sq(idx).sqrt());
        Ok(if norms.len() >= count {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        })
    });
    integrate(&mut stepper, &mut state, tau * count as f64, &mut [&mut obs])?;
    Ok(norms)
}

pub fn run_bourgain_set_estimate<F: Flow>(setup: &Setup, out: Option<&Path>, hash: &str) -> Result<BourgainTable> {
    let cfg = &setup.cfg;
    let b = &cfg.bourgain;
    let sigma = *cfg
        .sigma
        .first()
        .ok_or_else(|| Error::InvalidParameter("bourgain needs at least one sigma".into()))?;
    let nu = cfg.nu[0];
    let st = run_stationary::<F>(setup, nu, cfg.t_end(nu), b.members, &[])?;
    let initial: Vec<F> = st.members.iter().map(|m| m.final_state.field.clone()).collect();
    let stationary = st.acc.series(Observable::Sigma(0));

    let idx = SobolevIndex::inhomogeneous(sigma);
    let probes = b.doubling_samples.min(initial.len());
    let doubling_probes: Vec<(Option<f64>, f64)> = run_members(probes, setup.exec, |i| {
        let u0 = &initial[i];
        let n0 = u0.velocity_norm_sq(idx).sqrt();
        let t = doubling_time(
            u0,
            sigma,
            b.doubling_horizon,
            b.doubling_horizon / DOUBLING_CHECKS,
            &cfg.step,
            cfg.galerkin_radius(),
        )?;
        Ok((t, n0))
    })?;
    let c = match b.doubling_constant {
        Some(c) => c,
        None => {
            // a probe that never doubled contributes its horizon
            let mut v: Vec<f64> = doubling_probes
                .iter()
                .map(|(t, n)| t.unwrap_or(b.doubling_horizon) * n)
                .collect();
            median(&mut v)
        }
    };

    let lambdas: Vec<f64> = if b.lambdas.is_empty() {
        let mut s = stationary.clone();
        s.sort_by(f64::total_cmp);
        [0.5, 0.9, 0.99]
            .iter()
            .map(|q| s[((q * s.len() as f64) as usize).min(s.len() - 1)])
            .collect()
    } else {
        b.lambdas.clone()
    };
    let t_max = b.horizons.iter().copied().fold(0.0, f64::max);

    let mut cells = Vec::new();
    for &lambda in &lambdas {
        let tau = c / lambda;
        let count = (t_max / tau + 1e-9).floor() as usize + 1;
        let norms = run_members(initial.len(), setup.exec, |i| {
            checkpoint_norms(setup, &initial[i], tau, count, sigma)
        })?;
        let stationary_tail =
            stationary.iter().filter(|&&v| v > lambda).count() as f64 / stationary.len().max(1) as f64;
        for &horizon in &b.horizons {
            let n = (horizon / tau + 1e-9).floor() as usize + 1;
            let mut exits = 0usize;
            let mut above = 0usize;
            let mut total = 0usize;
            for traj in &norms {
                let seen = &traj[..n.min(traj.len())];
                if seen.iter().any(|&v| v > lambda) {
                    exits += 1;
                }
                above += seen.iter().filter(|&&v| v > lambda).count();
                total += seen.len();
            }
            let m = norms.len() as f64;
            let exit_fraction = exits as f64 / m;
            let pooled_tail = above as f64 / total.max(1) as f64;
            // pooled over the same trajectories and checkpoints, so the
            // finite union bound holds exactly on the counts
            let bound = n as f64 * pooled_tail;
            let exact = exits * total <= n * above * norms.len();
            cells.push(BourgainCell {
                lambda,
                horizon,
                tau,
                checkpoints: n,
                members: norms.len(),
                exit_fraction,
                pooled_tail,
                stationary_tail,
                bound,
                verdict: Verdict::from_bool(exact),
            });
        }
    }

    let table = BourgainTable {
        sigma,
        doubling_constant: c,
        doubling_probes,
        cells,
    };
    if let Some(dir) = out {
        write_bourgain(dir, hash, &table)?;
    }
    Ok(table)
}

pub fn bourgain_checks(t: &BourgainTable) -> Vec<Check> {
    t.cells
        .iter()
        .map(|c| Check {
            quantity: format!("exit_fraction[lambda={},T={}]", c.lambda, c.horizon),
            estimate: c.exit_fraction,
            ci_half_width: 0.0,
            target: c.bound,
            verdict: c.verdict,
        })
        .collect()
}

pub fn write_bourgain(dir: &Path, hash: &str, t: &BourgainTable) -> Result<()> {
    let mut r = ReportSet::create(dir, "bourgain", hash)?;
    for c in bourgain_checks(t) {
        r.check(&c)?;
    }
    r.log.event(
        "doubling",
        &serde_json::json!({ "sigma": t.sigma, "constant": t.doubling_constant, "probes": t.doubling_probes }),
    )?;
    let mut tab = r.series("bourgain_cells", &CELL_COLUMNS)?;
    for c in &t.cells {
        r.log.event("cell", c)?;
        tab.row(&[
            fmt_f64(c.lambda),
            fmt_f64(c.horizon),
            fmt_f64(c.tau),
            c.checkpoints.to_string(),
            c.members.to_string(),
            fmt_f64(c.exit_fraction),
            fmt_f64(c.pooled_tail),
            fmt_f64(c.stationary_tail),
            fmt_f64(c.bound),
            c.verdict.as_str().into(),
        ])?;
    }
    Ok(())
}
