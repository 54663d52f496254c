//! Stationary runs and their statistical checks.

use std::path::Path;

use serde::Serialize;

use super::{run_stationary, Setup, Stationary};
use crate::dynamics::Flow;
use crate::error::{Error, Result};
use crate::report::{fmt_f64, ReportSet};
use crate::stats::{
    balance_report, batch_means_ci, g_identity_check, median_l2, small_ball_probe, tail_exponent, BalanceReport,
    Check, GIdentity, Interval, Observable, SmallBall, TailFit, Verdict,
};

/// Slack allowed on the fitted tail slope.
pub const TAIL_TOL: f64 = 0.5;
/// Slack allowed on the fitted small-ball exponent.
pub const SMALL_BALL_TOL: f64 = 0.4;
/// Relative accuracy asked of the balance identities.
pub const BALANCE_REL_TOL: f64 = 0.1;

#[derive(Debug, Clone, Serialize)]
pub struct StationaryAnalysis {
    pub nu: f64,
    pub t_end: f64,
    pub samples: usize,
    pub balance: BalanceReport,
    /// `E‖u‖²_{L²}` and its half-width.
    pub mean_l2: (f64, f64),
    pub g_identity: Option<GIdentity>,
    /// One fit per configured `σ`.
    pub tails: Vec<Option<TailFit>>,
    pub small_ball: Option<SmallBall>,
    pub exp_moment: (f64, f64),
    pub holder_slack: Option<f64>,
    /// Fraction of samples with `‖N(u)‖/‖u‖` below the threshold.
    pub near_stationary: f64,
    /// Per-member `E‖u‖²_{L²}`, to expose dependence on the initial condition.
    pub member_means: Vec<f64>,
    pub checks: Vec<Check>,
    /// Checks that could not be evaluated, with the reason.
    pub skipped: Vec<(String, String)>,
}

impl StationaryAnalysis {
    pub fn check(&self, quantity: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.quantity == quantity)
    }
}

fn insufficient(e: &Error) -> bool {
    matches!(e, Error::InsufficientData { .. } | Error::DegenerateFit(_))
}

fn rel_check(name: &str, c: &Check) -> Check {
    let rel = c.relative_error();
    Check {
        quantity: name.into(),
        estimate: rel,
        ci_half_width: c.ci_half_width / c.target.abs(),
        target: BALANCE_REL_TOL,
        verdict: Verdict::from_bool(rel <= BALANCE_REL_TOL),
    }
}

/// Every statistical check on a stationary ensemble.
pub fn analyze<F: Flow>(setup: &Setup, st: &Stationary<F>) -> Result<StationaryAnalysis> {
    let cfg = &setup.cfg;
    let acc = &st.acc;
    let nb = cfg.batches;
    let balance = balance_report(acc, &setup.spectrum, nb)?;
    let mut checks: Vec<Check> = balance.checks().into_iter().cloned().collect();
    checks.push(rel_check("mean_h1_delta_sq_rel_err", &balance.energy));
    if let Some(e) = &balance.enstrophy {
        checks.push(rel_check("mean_h2_delta_sq_rel_err", e));
    }
    let mut skipped = Vec::new();

    let mean_l2 = batch_means_ci(&acc.series(Observable::L2), nb)?;
    checks.push(Check {
        quantity: "mean_l2_sq".into(),
        estimate: mean_l2.0,
        ci_half_width: mean_l2.1,
        target: f64::NAN,
        verdict: Verdict::Evidence,
    });

    let g_identity = match median_l2(acc) {
        Some(m) => {
            let g = g_identity_check(acc, balance.b0, Interval::from(m), nb)?;
            checks.push(g.check.clone());
            Some(g)
        }
        None => None,
    };

    let mut tails = Vec::new();
    for (i, &sigma) in cfg.sigma.iter().enumerate() {
        match tail_exponent(&acc.series(Observable::Sigma(i)), cfg.delta, sigma) {
            Ok(fit) => {
                checks.push(Check {
                    quantity: format!("tail_slope_sigma_{sigma}"),
                    estimate: fit.slope,
                    ci_half_width: fit.stderr,
                    target: fit.target,
                    verdict: fit.verdict(TAIL_TOL),
                });
                tails.push(Some(fit));
            }
            Err(e) if insufficient(&e) => {
                skipped.push((format!("tail_slope_sigma_{sigma}"), e.to_string()));
                tails.push(None);
            }
            Err(e) => return Err(e),
        }
    }

    let l2_norms: Vec<f64> = acc.series(Observable::L2).iter().map(|v| v.sqrt()).collect();
    let small_ball = match small_ball_probe(&l2_norms, None, cfg.delta) {
        Ok(sb) => {
            checks.push(Check {
                quantity: "small_ball_exponent".into(),
                estimate: sb.exponent.unwrap_or(f64::NAN),
                ci_half_width: 0.0,
                target: sb.target,
                verdict: sb.verdict(SMALL_BALL_TOL),
            });
            checks.push(Check {
                quantity: "atom_fine_over_coarse_mass".into(),
                estimate: sb.atoms.fine_max_mass / sb.atoms.coarse_max_mass,
                ci_half_width: 0.0,
                target: 0.25,
                verdict: Verdict::from_bool(sb.atoms.passes),
            });
            Some(sb)
        }
        Err(e) if insufficient(&e) => {
            skipped.push(("small_ball_exponent".into(), e.to_string()));
            None
        }
        Err(e) => return Err(e),
    };

    let exp_moment = batch_means_ci(&acc.series(Observable::ExpMoment), nb)?;
    checks.push(Check {
        quantity: "exp_moment".into(),
        estimate: exp_moment.0,
        ci_half_width: exp_moment.1,
        target: f64::NAN,
        verdict: Verdict::from_bool(exp_moment.0.is_finite()),
    });

    let holder_slack = acc.holder_slack();
    if let Some(s) = holder_slack {
        checks.push(Check {
            quantity: "holder_slack".into(),
            estimate: s,
            ci_half_width: 0.0,
            target: 0.0,
            verdict: Verdict::from_bool(s >= 0.0),
        });
    }

    let ratios = st.transport_ratios();
    let near = if ratios.is_empty() {
        0.0
    } else {
        ratios.iter().filter(|&&r| r < cfg.stationary_threshold).count() as f64 / ratios.len() as f64
    };
    checks.push(Check {
        quantity: "near_stationary_fraction".into(),
        estimate: near,
        ci_half_width: 0.0,
        target: cfg.stationary_threshold,
        verdict: Verdict::Evidence,
    });

    let member_means: Vec<f64> = st
        .members
        .iter()
        .map(|m| m.acc.mean(Observable::L2).unwrap_or(f64::NAN))
        .collect();
    if member_means.len() > 1 {
        let lo = member_means.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = member_means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        checks.push(Check {
            quantity: "member_l2_spread".into(),
            estimate: hi - lo,
            ci_half_width: 0.0,
            target: 2.0 * mean_l2.1,
            verdict: if hi - lo <= 2.0 * mean_l2.1 {
                Verdict::Evidence
            } else {
                Verdict::EvidenceAgainst
            },
        });
    }

    Ok(StationaryAnalysis {
        nu: st.nu,
        t_end: st.t_end,
        samples: acc.count(),
        balance,
        mean_l2,
        g_identity,
        tails,
        small_ball,
        exp_moment,
        holder_slack,
        near_stationary: near,
        member_means,
        checks,
        skipped,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateSummary {
    pub runs: Vec<StationaryAnalysis>,
}

impl SimulateSummary {
    pub fn checks(&self) -> impl Iterator<Item = (f64, &Check)> {
        self.runs.iter().flat_map(|r| r.checks.iter().map(move |c| (r.nu, c)))
    }
}

/// Quantity label carrying the viscosity.
pub fn labelled(quantity: &str, nu: f64) -> String {
    format!("{quantity}[nu={nu}]")
}

/// Stationary runs at every configured viscosity, written to `out` as
/// `simulate.csv`/`simulate.jsonl` plus one `samples_<i>.csv` per viscosity.
pub fn run_simulate<F: Flow>(setup: &Setup, out: Option<&Path>, hash: &str) -> Result<SimulateSummary> {
    let mut report = out.map(|d| ReportSet::create(d, "simulate", hash)).transpose()?;
    let mut runs = Vec::new();
    for (i, &nu) in setup.cfg.nu.iter().enumerate() {
        let t_end = setup.cfg.t_end(nu);
        let st = run_stationary::<F>(setup, nu, t_end, setup.cfg.members, &[])
            .map_err(|e| e.context(format!("simulate row nu={nu}")))?;
        let a = analyze(setup, &st)?;
        if let Some(r) = report.as_mut() {
            write_analysis(r, &a)?;
            write_samples(r, &format!("samples_{i}"), setup, &st)?;
        }
        runs.push(a);
    }
    Ok(SimulateSummary { runs })
}

pub(crate) fn write_analysis(r: &mut ReportSet, a: &StationaryAnalysis) -> Result<()> {
    for c in &a.checks {
        let mut c = c.clone();
        c.quantity = labelled(&c.quantity, a.nu);
        r.check(&c)?;
    }
    for (q, why) in &a.skipped {
        r.log.event(
            "skipped",
            &serde_json::json!({ "quantity": labelled(q, a.nu), "reason": why }),
        )?;
    }
    r.log.event("analysis", a)
}

pub(crate) fn write_samples<F>(r: &ReportSet, name: &str, setup: &Setup, st: &Stationary<F>) -> Result<()> {
    let mut cols: Vec<String> = ["member", "index", "time", "l2_sq", "h1_sq", "h1_delta_sq", "h2_delta_sq", "forced"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend(setup.cfg.sigma.iter().map(|s| format!("h_sigma_{s}")));
    let colref: Vec<&str> = cols.iter().map(|s| s.as_str()).collect();
    let mut t = r.series(name, &colref)?;
    for ((member, k), s) in st.acc.samples() {
        let mut row = vec![
            member.to_string(),
            k.to_string(),
            fmt_f64(*k as f64 * setup.cfg.sample_every),
            fmt_f64(s.l2),
            fmt_f64(s.h1),
            fmt_f64(s.h1d),
            fmt_f64(s.h2d),
            fmt_f64(s.forced),
        ];
        row.extend(s.sigma_norms.iter().map(|&v| fmt_f64(v)));
        t.row(&row)?;
    }
    Ok(())
}
