//! Viscosity sweep at fixed spectrum and `δ`.

use std::path::Path;

use serde::Serialize;

use super::simulate::{analyze, labelled, write_analysis, StationaryAnalysis};
use super::{run_stationary, Setup};
use crate::dynamics::Flow;
use crate::error::{Error, Result};
use crate::report::{fmt_f64, ReportSet};
use crate::stats::{Check, Verdict};

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub nu: f64,
    /// Galerkin radius in 3D.
    pub galerkin: Option<f64>,
    pub analysis: StationaryAnalysis,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// `ν`-independence of the balance targets across rows.
    pub uniform_targets: Check,
}

pub const ROW_COLUMNS: [&str; 12] = [
    "nu",
    "galerkin",
    "samples",
    "mean_l2_sq",
    "mean_l2_sq_ci",
    "mean_h1_delta_sq",
    "mean_h1_delta_sq_ci",
    "b0_half",
    "mean_h2_delta_sq",
    "mean_h2_delta_sq_ci",
    "b1_half",
    "verdict",
];

/// Recompute a single sweep row.
pub fn sweep_row<F: Flow>(setup: &Setup, nu: f64) -> Result<SweepRow> {
    let t_end = setup.cfg.t_end(nu);
    let st = run_stationary::<F>(setup, nu, t_end, setup.cfg.members, &[])
        .map_err(|e| e.context(format!("sweep row nu={nu}")))?;
    Ok(SweepRow {
        nu,
        galerkin: setup.cfg.galerkin_radius(),
        analysis: analyze(setup, &st)?,
    })
}

pub fn run_viscosity_sweep<F: Flow>(setup: &Setup, out: Option<&Path>, hash: &str) -> Result<SweepTable> {
    if setup.cfg.nu.is_empty() {
        return Err(Error::InvalidParameter("viscosity list is empty".into()));
    }
    let mut report = out.map(|d| ReportSet::create(d, "sweep", hash)).transpose()?;
    let mut table = match &report {
        Some(r) => Some(r.series("sweep_rows", &ROW_COLUMNS)?),
        None => None,
    };
    let mut rows = Vec::new();
    for &nu in &setup.cfg.nu {
        let row = sweep_row::<F>(setup, nu)?;
        if let Some(r) = report.as_mut() {
            write_analysis(r, &row.analysis)?;
        }
        if let Some(t) = table.as_mut() {
            let a = &row.analysis;
            let b = &a.balance;
            let (h2, h2ci) = b
                .enstrophy
                .as_ref()
                .map_or((f64::NAN, f64::NAN), |c| (c.estimate, c.ci_half_width));
            let pass = b.checks().iter().all(|c| c.verdict.passed());
            t.row(&[
                fmt_f64(nu),
                row.galerkin.map_or_else(|| "".into(), fmt_f64),
                a.samples.to_string(),
                fmt_f64(a.mean_l2.0),
                fmt_f64(a.mean_l2.1),
                fmt_f64(b.energy.estimate),
                fmt_f64(b.energy.ci_half_width),
                fmt_f64(b.b0 / 2.0),
                fmt_f64(h2),
                fmt_f64(h2ci),
                fmt_f64(b.b1 / 2.0),
                Verdict::from_bool(pass).as_str().into(),
            ])?;
        }
        rows.push(row);
    }
    let first = rows[0].analysis.balance.b0;
    let spread = rows
        .iter()
        .map(|r| (r.analysis.balance.b0 - first).abs())
        .fold(0.0, f64::max);
    let uniform_targets = Check {
        quantity: "balance_target_spread".into(),
        estimate: spread,
        ci_half_width: 0.0,
        target: 0.0,
        verdict: Verdict::from_bool(spread == 0.0),
    };
    if let Some(r) = report.as_mut() {
        r.check(&uniform_targets)?;
        for row in &rows {
            r.log.event(
                "row",
                &serde_json::json!({ "nu": row.nu, "label": labelled("row", row.nu), "samples": row.analysis.samples }),
            )?;
        }
    }
    Ok(SweepTable { rows, uniform_targets })
}
