//! Time-averaged estimation of stationary observables.
//!
//! Samples are stored as keyed records and every statistic is evaluated in
//! key order, so `merge` is exactly associative and commutative and results
//! never depend on how an ensemble was split across workers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::field::{FlowField, SobolevIndex};
use crate::forcing::NoiseSpectrum;

/// Per-sample observables of one snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// `‖u‖²_{L²}`
    pub l2: f64,
    /// `‖u‖²_{Ḣ¹}`
    pub h1: f64,
    /// `‖u‖²_{Ḣ^{1+δ}}`
    pub h1d: f64,
    /// `‖u‖²_{Ḣ^{2+δ}}`
    pub h2d: f64,
    /// `Σ_n φ_n² |û(n)|²`
    pub forced: f64,
    /// `‖u‖_{H^σ}` for each configured `σ`.
    pub sigma_norms: Vec<f64>,
}

impl Sample {
    pub fn measure<F: FlowField>(field: &F, spectrum: &NoiseSpectrum, delta: f64, sigmas: &[f64]) -> Self {
        Measurer::new(spectrum, delta, sigmas).measure(field)
    }
}

/// Precomputed per-slot weights turning a field into a [`Sample`].
#[derive(Debug, Clone)]
pub struct Measurer {
    modes: Vec<usize>,
    /// Per retained mode: `1/|n|²` (vorticity to velocity), `|n|²`,
    /// `|n|^{2(1+δ)}`, `|n|^{2(2+δ)}`, `φ_n²`, then `⟨n⟩^{2σ}` per `σ`.
    weights: Vec<f64>,
    stride: usize,
    nsig: usize,
}

impl Measurer {
    pub fn new(spectrum: &NoiseSpectrum, delta: f64, sigmas: &[f64]) -> Self {
        let grid = spectrum.grid();
        let amp = spectrum.amplitudes();
        let stride = 5 + sigmas.len();
        let modes = grid.modes().to_vec();
        let mut weights = Vec::with_capacity(modes.len() * stride);
        for &idx in &modes {
            let k2 = grid.k2(idx);
            let kd = k2.powf(delta);
            weights.extend_from_slice(&[1.0 / k2, k2, k2 * kd, k2 * k2 * kd, amp[idx] * amp[idx]]);
            weights.extend(sigmas.iter().map(|&sg| SobolevIndex::inhomogeneous(sg).weight(k2)));
        }
        Measurer {
            modes,
            weights,
            stride,
            nsig: sigmas.len(),
        }
    }

    pub fn measure<F: FlowField>(&self, field: &F) -> Sample {
        let mut s = Sample {
            l2: 0.0,
            h1: 0.0,
            h1d: 0.0,
            h2d: 0.0,
            forced: 0.0,
            sigma_norms: vec![0.0; self.nsig],
        };
        let vort = field.components().len() == 1;
        for (&idx, w) in self.modes.iter().zip(self.weights.chunks_exact(self.stride)) {
            let mut e = field.mode_energy(idx);
            if vort {
                e *= w[0];
            }
            s.l2 += e;
            s.h1 += w[1] * e;
            s.h1d += w[2] * e;
            s.h2d += w[3] * e;
            s.forced += w[4] * e;
            for (acc, ws) in s.sigma_norms.iter_mut().zip(&w[5..]) {
                *acc += ws * e;
            }
        }
        for v in &mut s.sigma_norms {
            *v = v.sqrt();
        }
        s
    }
}

/// Parameters shared by every accumulator that may be merged together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccumulatorSpec {
    pub dim: usize,
    pub delta: f64,
    /// Exponential-moment rate `γ`.
    pub gamma: f64,
    pub sigmas: Vec<f64>,
    /// Upper edge of the `‖u‖_{L²}` histogram.
    pub hist_max: f64,
    pub hist_bins: usize,
}

impl AccumulatorSpec {
    /// Defaults tied to a spectrum: `γ = 1/(2 max φ²)` and histogram range
    /// `[0, 4 sqrt(B₀/2)]` with 256 bins.
    pub fn for_spectrum(spectrum: &NoiseSpectrum, delta: f64, sigmas: Vec<f64>) -> Self {
        let maxa = spectrum.max_amplitude_sq();
        let b0 = spectrum.b_constant(0.0);
        AccumulatorSpec {
            dim: spectrum.grid().dim(),
            delta,
            gamma: if maxa > 0.0 { 0.5 / maxa } else { 0.0 },
            sigmas,
            hist_max: if b0 > 0.0 { 4.0 * (b0 / 2.0).sqrt() } else { 1.0 },
            hist_bins: 256,
        }
    }
}

/// Sample key: trajectory stream and sample index within it.
pub type SampleKey = (u64, u64);

#[derive(Debug, Clone, PartialEq)]
pub struct MomentAccumulator {
    spec: AccumulatorSpec,
    records: BTreeMap<SampleKey, Sample>,
}

/// Selector for a scalar observable of a [`Sample`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    L2,
    H1,
    H1Delta,
    H2Delta,
    Forced,
    /// `e^{γ‖u‖²_{Ḣ¹}}` in 2D, `e^{γ‖u‖²_{L²}}` in 3D.
    ExpMoment,
    /// `‖u‖_{H^σ}` for the `i`-th configured `σ`.
    Sigma(usize),
}

impl MomentAccumulator {
    pub fn new(spec: AccumulatorSpec) -> Self {
        MomentAccumulator {
            spec,
            records: BTreeMap::new(),
        }
    }

    pub fn spec(&self) -> &AccumulatorSpec {
        &self.spec
    }

    pub fn count(&self) -> usize {
        self.records.len()
    }

    pub fn insert(&mut self, key: SampleKey, sample: Sample) -> Result<()> {
        if sample.sigma_norms.len() != self.spec.sigmas.len() {
            return Err(Error::InvalidParameter(format!(
                "sample carries {} sigma norms, accumulator expects {}",
                sample.sigma_norms.len(),
                self.spec.sigmas.len()
            )));
        }
        if self.records.insert(key, sample).is_some() {
            return Err(Error::InvalidParameter(format!("duplicate sample key {key:?}")));
        }
        Ok(())
    }

    /// Measure `field` and record it under `key`.
    pub fn accumulate<F: FlowField>(&mut self, key: SampleKey, field: &F, spectrum: &NoiseSpectrum) -> Result<()> {
        let s = Sample::measure(field, spectrum, self.spec.delta, &self.spec.sigmas);
        self.insert(key, s)
    }

    /// Union of two accumulators over the same spec and disjoint keys.
    pub fn merge(mut self, other: MomentAccumulator) -> Result<Self> {
        if self.spec != other.spec {
            return Err(Error::InvalidParameter("cannot merge accumulators with different specs".into()));
        }
        for (k, s) in other.records {
            if self.records.insert(k, s).is_some() {
                return Err(Error::InvalidParameter(format!("duplicate sample key {k:?} in merge")));
            }
        }
        Ok(self)
    }

    pub fn samples(&self) -> impl Iterator<Item = (&SampleKey, &Sample)> {
        self.records.iter()
    }

    /// Observable values in key order.
    pub fn series(&self, obs: Observable) -> Vec<f64> {
        let gamma = self.spec.gamma;
        let dim = self.spec.dim;
        self.records
            .values()
            .map(|s| match obs {
                Observable::L2 => s.l2,
                Observable::H1 => s.h1,
                Observable::H1Delta => s.h1d,
                Observable::H2Delta => s.h2d,
                Observable::Forced => s.forced,
                Observable::ExpMoment => (gamma * if dim == 2 { s.h1 } else { s.l2 }).exp(),
                Observable::Sigma(i) => s.sigma_norms[i],
            })
            .collect()
    }

    pub fn mean(&self, obs: Observable) -> Option<f64> {
        let v = self.series(obs);
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// `‖u‖_{L²}` histogram: `hist_bins` uniform bins over `[0, hist_max]`
    /// followed by one overflow bin, as fractions of the sample count.
    pub fn histogram(&self) -> Vec<f64> {
        let nb = self.spec.hist_bins;
        let mut counts = vec![0usize; nb + 1];
        for s in self.records.values() {
            let x = s.l2.sqrt();
            let b = (x / self.spec.hist_max * nb as f64).floor();
            let b = if b.is_finite() && b >= 0.0 { (b as usize).min(nb) } else { nb };
            counts[b] += 1;
        }
        let n = self.count().max(1) as f64;
        counts.into_iter().map(|c| c as f64 / n).collect()
    }

    /// Hölder consequence of the interpolation inequality on the estimates:
    /// `E‖u‖²_{Ḣ^{1+δ}} ≤ (E‖u‖²_{Ḣ¹})^{1/(1+δ)} (E‖u‖²_{Ḣ^{2+δ}})^{δ/(1+δ)}`.
    pub fn holder_slack(&self) -> Option<f64> {
        let d = self.spec.delta;
        let a = self.mean(Observable::H1Delta)?;
        let b = self.mean(Observable::H1)?;
        let c = self.mean(Observable::H2Delta)?;
        Some(b.powf(1.0 / (1.0 + d)) * c.powf(d / (1.0 + d)) - a)
    }
}

/// Two-sided 95% Student-t quantile with `df` degrees of freedom.
pub fn t_quantile_95(df: usize) -> f64 {
    StudentsT::new(0.0, 1.0, df as f64)
        .expect("df >= 1")
        .inverse_cdf(0.975)
}

/// Batch-means estimate `(mean, 95% half-width)`. The series is cut into
/// `n_batches` equal consecutive blocks; the first `len mod n_batches`
/// values are dropped.
pub fn batch_means_ci(series: &[f64], n_batches: usize) -> Result<(f64, f64)> {
    if n_batches < 2 || series.len() < 2 * n_batches {
        return Err(Error::InsufficientData {
            needed: 2 * n_batches.max(2),
            have: series.len(),
        });
    }
    let b = series.len() / n_batches;
    let start = series.len() - b * n_batches;
    let means: Vec<f64> = series[start..]
        .chunks_exact(b)
        .map(|c| c.iter().sum::<f64>() / b as f64)
        .collect();
    let k = means.len() as f64;
    let mean = means.iter().sum::<f64>() / k;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (k - 1.0);
    let half = t_quantile_95(n_batches - 1) * (var / k).sqrt();
    Ok((mean, half))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// Report-only comparison for asymptotic statements.
    Evidence,
    EvidenceAgainst,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Evidence => "evidence",
            Verdict::EvidenceAgainst => "evidence_against",
        }
    }

    pub fn passed(&self) -> bool {
        matches!(self, Verdict::Pass | Verdict::Evidence)
    }
}

/// One row of a report: an estimate compared against a target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub quantity: String,
    pub estimate: f64,
    pub ci_half_width: f64,
    pub target: f64,
    pub verdict: Verdict,
}

impl Check {
    /// Pass iff the target lies inside `estimate ± ci_half_width`.
    pub fn ci(quantity: impl Into<String>, estimate: f64, half: f64, target: f64) -> Self {
        Check {
            quantity: quantity.into(),
            estimate,
            ci_half_width: half,
            target,
            verdict: Verdict::from_bool((estimate - target).abs() <= half),
        }
    }

    pub fn relative_error(&self) -> f64 {
        (self.estimate - self.target).abs() / self.target.abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    /// `E‖u‖²_{Ḣ^{1+δ}}` against `B₀/2`.
    pub energy: Check,
    /// `E‖u‖²_{Ḣ^{2+δ}}` against `B₁/2`; 2D only.
    pub enstrophy: Option<Check>,
    /// `E‖u‖²_{Ḣ¹}` against the bracket `[C_δ, B₀/2]`.
    pub bracket: Check,
    pub c_delta: f64,
    pub b0: f64,
    pub b1: f64,
}

impl BalanceReport {
    pub fn checks(&self) -> Vec<&Check> {
        let mut v = vec![&self.energy];
        if let Some(c) = &self.enstrophy {
            v.push(c);
        }
        v.push(&self.bracket);
        v
    }
}

/// `C_δ = ½ (B₀ / B₁^{δ/(1+δ)})^{1+δ}`, the lower end of the `Ḣ¹` bracket.
pub fn c_delta(b0: f64, b1: f64, delta: f64) -> f64 {
    if b1 <= 0.0 {
        return 0.0;
    }
    0.5 * (b0 / b1.powf(delta / (1.0 + delta))).powf(1.0 + delta)
}

/// Compare time averages with the exact stationary targets.
pub fn balance_report(acc: &MomentAccumulator, spectrum: &NoiseSpectrum, n_batches: usize) -> Result<BalanceReport> {
    let delta = acc.spec().delta;
    let b0 = spectrum.b_constant(0.0);
    let b1 = spectrum.b_constant(1.0);
    let (m, h) = batch_means_ci(&acc.series(Observable::H1Delta), n_batches)?;
    let energy = Check::ci("mean_h1_delta_sq", m, h, b0 / 2.0);
    let enstrophy = if acc.spec().dim == 2 {
        let (m, h) = batch_means_ci(&acc.series(Observable::H2Delta), n_batches)?;
        Some(Check::ci("mean_h2_delta_sq", m, h, b1 / 2.0))
    } else {
        None
    };
    let cd = c_delta(b0, b1, delta);
    let (m, h) = batch_means_ci(&acc.series(Observable::H1), n_batches)?;
    let bracket = Check {
        quantity: "mean_h1_sq_in_bracket".into(),
        estimate: m,
        ci_half_width: h,
        target: cd,
        // CI overlap, so a collapsed bracket is not failed by noise alone
        verdict: Verdict::from_bool(m + h >= cd && m - h <= b0 / 2.0),
    };
    Ok(BalanceReport {
        energy,
        enstrophy,
        bracket,
        c_delta: cd,
        b0,
        b1,
    })
}

/// Ordinary least squares `y ≈ a + b x`; returns `(b, stderr(b))`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(Error::InsufficientData { needed: 2, have: n });
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if !(sxx > 1e-300) {
        return Err(Error::DegenerateFit("abscissae do not vary".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let se = if n > 2 {
        let rss: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| (b - my - slope * (a - mx)).powi(2))
            .sum();
        (rss / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok((slope, se))
}

pub const MIN_DISTRIBUTION_SAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub slope: f64,
    pub stderr: f64,
    pub target: f64,
    pub points: usize,
}

impl TailFit {
    /// Directional verdict: decay at least as fast as the bound, up to `tol`.
    pub fn verdict(&self, tol: f64) -> Verdict {
        Verdict::from_bool(self.slope <= self.target + tol)
    }
}

/// Target tail exponent `−2(1+δ)/(σ−1)`.
pub fn tail_target(delta: f64, sigma: f64) -> f64 {
    -2.0 * (1.0 + delta) / (sigma - 1.0)
}

/// Least-squares slope of `log P̂(X > λ)` against `log λ` over the top
/// decile of the samples.
pub fn tail_exponent(samples: &[f64], delta: f64, sigma: f64) -> Result<TailFit> {
    let n = samples.len();
    if n < MIN_DISTRIBUTION_SAMPLES {
        return Err(Error::InsufficientData {
            needed: MIN_DISTRIBUTION_SAMPLES,
            have: n,
        });
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let first = n - n / 10;
    let mut x = Vec::new();
    let mut y = Vec::new();
    // survival at the i-th order statistic, excluding the maximum
    for (i, &v) in s.iter().enumerate().take(n - 1).skip(first) {
        if v > 0.0 {
            x.push(v.ln());
            y.push(((n - 1 - i) as f64 / n as f64).ln());
        }
    }
    if s[first] == s[n - 1] {
        return Err(Error::DegenerateFit("upper decile is a single value".into()));
    }
    let (slope, stderr) = linear_fit(&x, &y)?;
    Ok(TailFit {
        slope,
        stderr,
        target: tail_target(delta, sigma),
        points: x.len(),
    })
}

/// Small-ball exponent `2(1+δ)/(2+δ)`.
pub fn small_ball_target(delta: f64) -> f64 {
    2.0 * (1.0 + delta) / (2.0 + delta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomCheck {
    pub coarse_bins: usize,
    pub fine_bins: usize,
    pub coarse_max_mass: f64,
    pub fine_max_mass: f64,
    pub passes: bool,
}

/// Largest bin mass must shrink at least fourfold between a 16-bin and a
/// 1024-bin histogram over the sample range.
pub fn atom_check(samples: &[f64]) -> AtomCheck {
    let (coarse, fine) = (16usize, 1024usize);
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let max_mass = |bins: usize| -> f64 {
        if samples.is_empty() {
            return 0.0;
        }
        if !(hi > lo) {
            return 1.0;
        }
        let mut c = vec![0usize; bins];
        for &v in samples {
            let b = ((v - lo) / (hi - lo) * bins as f64) as usize;
            c[b.min(bins - 1)] += 1;
        }
        *c.iter().max().expect("bins > 0") as f64 / samples.len() as f64
    };
    let cm = max_mass(coarse);
    let fm = max_mass(fine);
    AtomCheck {
        coarse_bins: coarse,
        fine_bins: fine,
        coarse_max_mass: cm,
        fine_max_mass: fm,
        passes: fm <= cm / 4.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallBall {
    pub eps: Vec<f64>,
    pub prob: Vec<f64>,
    /// Fitted `d log P / d log ε`; `None` with fewer than two positive points.
    pub exponent: Option<f64>,
    pub target: f64,
    pub atoms: AtomCheck,
}

impl SmallBall {
    /// Directional verdict: decay at least as fast as `ε^{target}`, up to `tol`.
    pub fn verdict(&self, tol: f64) -> Verdict {
        let decay_ok = self.exponent.is_none_or(|e| e >= self.target - tol);
        Verdict::from_bool(decay_ok && self.atoms.passes)
    }
}

/// Quantile-based default grid: the empirical quantiles at
/// `q = 0.002, 0.005, 0.01, 0.02, 0.05, 0.1`.
pub fn default_eps_grid(samples: &[f64]) -> Vec<f64> {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    [0.002, 0.005, 0.01, 0.02, 0.05, 0.1]
        .iter()
        .map(|q| s[((q * s.len() as f64) as usize).min(s.len() - 1)])
        .collect()
}

/// Empirical `P(‖u‖_{L²} < ε)` on a grid of `ε`, its fitted log-log slope,
/// and the non-atomicity check. `samples` are `‖u‖_{L²}` values.
pub fn small_ball_probe(samples: &[f64], eps: Option<&[f64]>, delta: f64) -> Result<SmallBall> {
    let n = samples.len();
    if n < MIN_DISTRIBUTION_SAMPLES {
        return Err(Error::InsufficientData {
            needed: MIN_DISTRIBUTION_SAMPLES,
            have: n,
        });
    }
    let mut eps: Vec<f64> = match eps {
        Some(e) => e.to_vec(),
        None => default_eps_grid(samples),
    };
    eps.sort_by(f64::total_cmp);
    eps.dedup();
    let prob: Vec<f64> = eps
        .iter()
        .map(|&e| samples.iter().filter(|&&v| v < e).count() as f64 / n as f64)
        .collect();
    let (x, y): (Vec<f64>, Vec<f64>) = eps
        .iter()
        .zip(&prob)
        .filter(|(e, p)| **e > 0.0 && **p > 0.0)
        .map(|(e, p)| (e.ln(), p.ln()))
        .unzip();
    let exponent = if x.len() >= 2 { Some(linear_fit(&x, &y)?.0) } else { None };
    Ok(SmallBall {
        eps,
        prob,
        exponent,
        target: small_ball_target(delta),
        atoms: atom_check(samples),
    })
}

/// Interval `Γ = [lo, hi]` of values of `‖u‖²_{L²}`; `hi` may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn empty() -> Self {
        Interval { lo: 0.0, hi: 0.0 }
    }

    pub fn from(lo: f64) -> Self {
        Interval { lo, hi: f64::INFINITY }
    }

    pub fn contains(&self, y: f64) -> bool {
        y >= self.lo && y <= self.hi && self.hi > self.lo
    }

    /// `|Γ ∩ (−∞, y)|`.
    pub fn length_below(&self, y: f64) -> f64 {
        (y.min(self.hi) - self.lo).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GIdentity {
    pub interval: Interval,
    /// Mean of the transport (first) term.
    pub transport: f64,
    /// Mean of the Itô (second) term.
    pub ito: f64,
    pub check: Check,
}

/// Per-sample value of the `g(x) = x` identity on `Γ`:
/// `|Γ ∩ (−∞, y)| (B₀/2 − ‖u‖²_{Ḣ^{1+δ}}) + 1_Γ(y) Σ φ_n²|û(n)|²`
/// with `y = ‖u‖²_{L²}`. Its stationary mean is zero.
pub fn g_identity_terms(s: &Sample, b0: f64, gamma_set: Interval) -> (f64, f64) {
    let t = gamma_set.length_below(s.l2) * (b0 / 2.0 - s.h1d);
    let i = if gamma_set.contains(s.l2) { s.forced } else { 0.0 };
    (t, i)
}

/// Monte Carlo residual of the identity with a batch-means CI.
pub fn g_identity_check(acc: &MomentAccumulator, b0: f64, gamma_set: Interval, n_batches: usize) -> Result<GIdentity> {
    let terms: Vec<(f64, f64)> = acc.samples().map(|(_, s)| g_identity_terms(s, b0, gamma_set)).collect();
    let total: Vec<f64> = terms.iter().map(|(a, b)| a + b).collect();
    let (m, h) = batch_means_ci(&total, n_batches)?;
    let n = terms.len() as f64;
    Ok(GIdentity {
        interval: gamma_set,
        transport: terms.iter().map(|t| t.0).sum::<f64>() / n,
        ito: terms.iter().map(|t| t.1).sum::<f64>() / n,
        check: Check::ci("g_identity_residual", m, h, 0.0),
    })
}

/// Median of `‖u‖²_{L²}` over the accumulator.
pub fn median_l2(acc: &MomentAccumulator) -> Option<f64> {
    let mut v = acc.series(Observable::L2);
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(v[v.len() / 2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Vorticity2D, C64};
    use crate::forcing::SpectrumKind;
    use crate::grid::ModeGrid;
    use std::sync::Arc;

    fn shell() -> NoiseSpectrum {
        let g = Arc::new(ModeGrid::new(2, 16).unwrap());
        NoiseSpectrum::new(g, SpectrumKind::Shell { radius: 1.0, amplitude: 1.0 }).unwrap()
    }

    #[test]
    fn zero_field_sample() {
        let s = shell();
        let spec = AccumulatorSpec::for_spectrum(&s, 0.5, vec![2.0]);
        let mut acc = MomentAccumulator::new(spec);
        acc.accumulate((0, 0), &Vorticity2D::zeros(Arc::clone(s.grid())), &s).unwrap();
        assert_eq!(acc.mean(Observable::L2), Some(0.0));
        assert_eq!(acc.mean(Observable::H1Delta), Some(0.0));
        assert_eq!(acc.mean(Observable::ExpMoment), Some(1.0));
    }

    #[test]
    fn sin_x1_adds_half() {
        let s = shell();
        let mut xi = Vorticity2D::zeros(Arc::clone(s.grid()));
        xi.set_mode([1, 0], C64::new(0.5, 0.0));
        let spec = AccumulatorSpec::for_spectrum(&s, 0.5, vec![]);
        let mut acc = MomentAccumulator::new(spec);
        acc.accumulate((0, 0), &xi, &s).unwrap();
        assert!((acc.mean(Observable::L2).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn merge_rejects_duplicates_and_mismatch() {
        let s = shell();
        let spec = AccumulatorSpec::for_spectrum(&s, 0.5, vec![]);
        let z = Vorticity2D::zeros(Arc::clone(s.grid()));
        let mut a = MomentAccumulator::new(spec.clone());
        a.accumulate((0, 0), &z, &s).unwrap();
        let b = a.clone();
        assert!(a.clone().merge(b).is_err());
        let mut other = spec;
        other.delta = 0.7;
        assert!(a.merge(MomentAccumulator::new(other)).is_err());
    }

    #[test]
    fn c_delta_shell_collapses() {
        assert!((c_delta(4.0, 4.0, 0.5) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn constant_series_zero_width() {
        let (m, h) = batch_means_ci(&[3.0; 100], 10).unwrap();
        assert_eq!((m, h), (3.0, 0.0));
        assert!(batch_means_ci(&[1.0; 5], 10).is_err());
    }

    #[test]
    fn t_quantile_reference() {
        assert!((t_quantile_95(19) - 2.093024).abs() < 1e-5);
    }

    #[test]
    fn tail_rejects_constant_samples() {
        assert!(matches!(tail_exponent(&[1.0; 2000], 0.5, 2.0), Err(Error::DegenerateFit(_))));
        assert!(matches!(tail_exponent(&[1.0; 10], 0.5, 2.0), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn targets() {
        assert_eq!(tail_target(0.5, 2.0), -3.0);
        assert!((small_ball_target(0.5) - 1.2).abs() < 1e-15);
    }

    #[test]
    fn empty_interval_gives_zero_terms() {
        let s = Sample {
            l2: 2.0,
            h1: 3.0,
            h1d: 4.0,
            h2d: 5.0,
            forced: 6.0,
            sigma_norms: vec![],
        };
        assert_eq!(g_identity_terms(&s, 4.0, Interval::empty()), (0.0, 0.0));
        let (t, i) = g_identity_terms(&s, 4.0, Interval::from(0.0));
        assert_eq!((t, i), (2.0 * (2.0 - 4.0), 6.0));
    }
}
