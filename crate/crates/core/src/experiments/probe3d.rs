//! Does the 3D stationary mass collapse toward zero as `ν` decreases?

use std::path::Path;

use serde::Serialize;

use super::{run_stationary, Setup};
use crate::error::{Error, Result};
use crate::field::Velocity;
use crate::report::{fmt_f64, ReportSet};
use crate::stats::{batch_means_ci, Check, Observable, Verdict};

#[derive(Debug, Clone, Serialize)]
pub struct ProbeRow {
    pub nu: f64,
    pub galerkin: f64,
    pub samples: usize,
    pub mean_l2: f64,
    pub mean_l2_ci: f64,
    pub mean_h1_delta: f64,
    pub mean_h1_delta_ci: f64,
    /// `B₀^{(N)}/2` of the truncated spectrum.
    pub b0_half: f64,
}

pub const ROW_COLUMNS: [&str; 8] = [
    "nu",
    "galerkin",
    "samples",
    "mean_l2_sq",
    "mean_l2_sq_ci",
    "mean_h1_delta_sq",
    "mean_h1_delta_sq_ci",
    "b0_half",
];

/// One row per `(ν, N)` with `N` from the probe section.
pub fn run_3d_alternative_probe(base: &Setup, out: Option<&Path>, hash: &str) -> Result<Vec<ProbeRow>> {
    if base.cfg.dimension != 3 {
        return Err(Error::InvalidParameter("probe3d needs dimension = 3".into()));
    }
    let mut report = out.map(|d| ReportSet::create(d, "probe3d", hash)).transpose()?;
    let mut table = match &report {
        Some(r) => Some(r.series("probe3d_rows", &ROW_COLUMNS)?),
        None => None,
    };
    let mut rows = Vec::new();
    for &n in &base.cfg.probe3d.galerkin {
        let mut cfg = base.cfg.clone();
        cfg.galerkin = Some(n);
        let setup = Setup::new(cfg, base.exec)?;
        for &nu in &setup.cfg.nu {
            let st = run_stationary::<Velocity>(&setup, nu, setup.cfg.t_end(nu), setup.cfg.members, &[])
                .map_err(|e| e.context(format!("probe3d row nu={nu} N={n}")))?;
            let nb = setup.cfg.batches;
            let (l2, l2c) = batch_means_ci(&st.acc.series(Observable::L2), nb)?;
            let (h, hc) = batch_means_ci(&st.acc.series(Observable::H1Delta), nb)?;
            let row = ProbeRow {
                nu,
                galerkin: n,
                samples: st.acc.count(),
                mean_l2: l2,
                mean_l2_ci: l2c,
                mean_h1_delta: h,
                mean_h1_delta_ci: hc,
                b0_half: setup.spectrum.b_constant(0.0) / 2.0,
            };
            if let Some(r) = report.as_mut() {
                r.check(&Check {
                    quantity: format!("mean_h1_delta_sq[nu={nu},N={n}]"),
                    estimate: h,
                    ci_half_width: hc,
                    target: row.b0_half,
                    verdict: Verdict::Evidence,
                })?;
                r.check(&Check {
                    quantity: format!("mean_l2_sq[nu={nu},N={n}]"),
                    estimate: l2,
                    ci_half_width: l2c,
                    target: 0.0,
                    verdict: Verdict::Evidence,
                })?;
                r.log.event("row", &row)?;
            }
            if let Some(t) = table.as_mut() {
                t.row(&[
                    fmt_f64(nu),
                    fmt_f64(n),
                    row.samples.to_string(),
                    fmt_f64(l2),
                    fmt_f64(l2c),
                    fmt_f64(h),
                    fmt_f64(hc),
                    fmt_f64(row.b0_half),
                ])?;
            }
            rows.push(row);
        }
    }
    Ok(rows)
}
