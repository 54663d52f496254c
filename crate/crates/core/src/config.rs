//! Experiment configuration (TOML).
//!
//! Every key has a default, so an empty document is a valid 2D setup.
//! Parsing reports the first syntax error with its line and column;
//! validation reports every violated requirement at once.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::StepControl;
use crate::error::{Error, Result};
use crate::forcing::SpectrumKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dimension: usize,
    /// Collocation points per axis, `M`.
    pub grid: usize,
    /// Galerkin radius `N` (3D); defaults to the dealias cutoff.
    pub galerkin: Option<f64>,
    pub delta: f64,
    /// Viscosities, largest first.
    pub nu: Vec<f64>,
    /// 3D regularity index used by growth exponents.
    pub s: f64,
    pub sigma: Vec<f64>,
    /// Exponential-moment rate; defaults to `1/(2 max φ²)`.
    pub gamma: Option<f64>,
    pub seed: u64,
    pub burn_in: f64,
    /// Sampling interval `Δ` of time averages.
    pub sample_every: f64,
    pub batches: usize,
    /// Run length in units of the forcing-scale relaxation time
    /// `1/(ν k_f^{2(1+δ)})`.
    pub decorrelation_times: f64,
    /// Lower bound on any stationary run length.
    pub min_t_end: f64,
    pub members: usize,
    /// Samples with `‖N(u)‖_{L²}/‖u‖_{L²}` below this count as near-stationary.
    pub stationary_threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub spectrum: SpectrumKind,
    pub step: StepControl,
    pub verify: VerifySection,
    pub growth: GrowthSection,
    pub bourgain: BourgainSection,
    pub probe3d: Probe3dSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dimension: 2,
            grid: 64,
            galerkin: None,
            delta: 0.5,
            nu: vec![1e-2],
            s: 3.6,
            sigma: vec![2.0],
            gamma: None,
            seed: 0,
            burn_in: 0.5,
            sample_every: 0.1,
            batches: 20,
            decorrelation_times: 500.0,
            min_t_end: 10.0,
            members: 1,
            stationary_threshold: 0.05,
            out: None,
            spectrum: SpectrumKind::Annulus { k: 4.0, alpha: 1.0 },
            step: StepControl::default(),
            verify: VerifySection::default(),
            growth: GrowthSection::default(),
            bourgain: BourgainSection::default(),
            probe3d: Probe3dSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub fields: usize,
    pub grid_2d: usize,
    pub grid_3d: usize,
    pub galerkin_3d: f64,
    pub conservation_grid_2d: usize,
    pub conservation_grid_3d: usize,
    pub conservation_galerkin_3d: f64,
    pub conservation_t: f64,
    pub conservation_cfl: f64,
    pub heat_fields: usize,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            fields: 100,
            grid_2d: 64,
            grid_3d: 24,
            galerkin_3d: 7.0,
            conservation_grid_2d: 128,
            conservation_grid_3d: 32,
            conservation_galerkin_3d: 10.0,
            conservation_t: 1.0,
            conservation_cfl: 0.1,
            heat_fields: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrowthSection {
    pub samples: usize,
    pub horizon: f64,
    /// Grid of the deterministic runs (initial data are zero-padded).
    pub grid: usize,
    pub sigma: f64,
    /// Allowed excess of `α̂` over `α*` before a sample is flagged.
    pub alpha_tolerance: f64,
    /// Snapshot spacing in forcing-scale relaxation times.
    pub spacing_decorrelations: f64,
}

impl Default for GrowthSection {
    fn default() -> Self {
        GrowthSection {
            samples: 16,
            horizon: 64.0,
            grid: 128,
            sigma: 2.0,
            alpha_tolerance: 0.3,
            spacing_decorrelations: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BourgainSection {
    /// Ball radii `λ`; empty selects empirical quantiles of `‖u‖_{H^σ}`.
    pub lambdas: Vec<f64>,
    pub horizons: Vec<f64>,
    pub members: usize,
    /// Trajectories used to measure the doubling constant.
    pub doubling_samples: usize,
    pub doubling_horizon: f64,
    /// Fixed doubling constant `c`; measured when absent.
    pub doubling_constant: Option<f64>,
}

impl Default for BourgainSection {
    fn default() -> Self {
        BourgainSection {
            lambdas: Vec::new(),
            horizons: vec![1.0, 4.0],
            members: 32,
            doubling_samples: 4,
            doubling_horizon: 20.0,
            doubling_constant: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Probe3dSection {
    pub galerkin: Vec<f64>,
}

impl Default for Probe3dSection {
    fn default() -> Self {
        Probe3dSection { galerkin: vec![3.0] }
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before.chars().count(), |p| before[p + 1..].chars().count()) + 1;
    (line, col)
}

impl ExperimentConfig {
    /// Parse and validate a TOML document.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
            Error::ConfigParse {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| e.context(format!("reading {}", path.display())))
    }

    /// Every violated requirement, in a stable order.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.dimension == 2 || self.dimension == 3) {
            v.push(format!("dimension must be 2 or 3 (got {})", self.dimension));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            v.push(format!("hypothesis delta > 0 violated (delta = {})", self.delta));
        }
        if self.dimension == 3 && !(self.s > 3.5) {
            v.push(format!("3D growth requires s > 7/2 (s = {})", self.s));
        }
        if self.grid < 8 {
            v.push(format!("grid must be at least 8 (got {})", self.grid));
        }
        let cutoff = (self.grid.max(1) - 1) / 3;
        if let Some(n) = self.galerkin {
            if !(n >= 1.0 && n <= cutoff as f64 * (self.dimension as f64).sqrt()) {
                v.push(format!("galerkin radius {n} outside [1, {cutoff} sqrt(d)] for grid {}", self.grid));
            }
        }
        if self.nu.is_empty() {
            v.push("viscosity list is empty".into());
        }
        if self.nu.iter().any(|&n| !(n > 0.0 && n.is_finite())) {
            v.push("every viscosity must be positive".into());
        }
        if self.nu.windows(2).any(|w| w[1] >= w[0]) {
            v.push("viscosities must be strictly descending".into());
        }
        if let Err(e) = self.spectrum.validate() {
            v.push(e.to_string());
        }
        if let Some(r) = self.spectrum.nominal_radius() {
            if (self.grid as f64) < 3.0 * r {
                v.push(format!(
                    "dealias headroom requires grid >= 3 * spectrum support radius ({} < 3 * {r})",
                    self.grid
                ));
            }
        }
        if let Err(e) = self.step.validate() {
            v.push(e.to_string());
        }
        if self.sigma.iter().any(|&s| !(s > 1.0)) {
            v.push("every sigma must exceed 1".into());
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                v.push(format!("gamma must be positive (got {g})"));
            }
        }
        if !(0.0..1.0).contains(&self.burn_in) {
            v.push(format!("burn_in must lie in [0, 1) (got {})", self.burn_in));
        }
        if !(self.sample_every > 0.0 && self.sample_every.is_finite()) {
            v.push(format!("sample_every must be positive (got {})", self.sample_every));
        }
        if self.batches < 2 {
            v.push(format!("batches must be at least 2 (got {})", self.batches));
        }
        if !(self.decorrelation_times > 0.0) || !(self.min_t_end > 0.0) {
            v.push("run length parameters must be positive".into());
        }
        if !(self.stationary_threshold >= 0.0) {
            v.push("stationary_threshold must be non-negative".into());
        }
        if self.members == 0 {
            v.push("members must be at least 1".into());
        }
        let g = &self.growth;
        if g.samples == 0 || !(g.horizon > 0.0) || g.grid < self.grid {
            v.push("growth needs samples >= 1, horizon > 0 and a grid no coarser than the base grid".into());
        }
        if self.dimension == 2 && !(g.sigma > 1.0 && g.sigma < 3.0 + self.delta) {
            v.push(format!("2D growth sigma must lie in (1, s + 1) with s = 2 + delta (sigma = {})", g.sigma));
        }
        if self.dimension == 3 && !(g.sigma > 0.0 && g.sigma < 2.0 * self.s) {
            v.push(format!("3D growth sigma must lie in (0, 2s) (sigma = {})", g.sigma));
        }
        let b = &self.bourgain;
        if b.horizons.iter().any(|&t| !(t > 0.0)) || b.lambdas.iter().any(|&l| !(l > 0.0)) {
            v.push("bourgain horizons and lambdas must be positive".into());
        }
        if b.members == 0 || b.doubling_samples == 0 {
            v.push("bourgain needs at least one member and one doubling sample".into());
        }
        if b.doubling_constant.is_some_and(|c| !(c > 0.0)) {
            v.push("bourgain doubling_constant must be positive".into());
        }
        if self.probe3d.galerkin.iter().any(|&n| !(n >= 1.0)) {
            v.push("probe3d galerkin radii must be at least 1".into());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::ConfigInvalid(v))
        }
    }

    /// Galerkin radius in effect (3D only).
    pub fn galerkin_radius(&self) -> Option<f64> {
        (self.dimension == 3).then(|| self.galerkin.unwrap_or(((self.grid - 1) / 3) as f64))
    }

    /// Reference forcing wavenumber `k_f`.
    pub fn forcing_radius(&self) -> f64 {
        match self.spectrum {
            SpectrumKind::Annulus { k, .. } => k,
            SpectrumKind::Shell { radius, .. } => radius,
            _ => 1.0,
        }
    }

    /// Relaxation time `1/(ν k_f^{2(1+δ)})` of the forcing scale.
    pub fn decorrelation_time(&self, nu: f64) -> f64 {
        1.0 / (nu * self.forcing_radius().powf(2.0 * (1.0 + self.delta)))
    }

    /// Stationary run length for viscosity `ν`.
    pub fn t_end(&self, nu: f64) -> f64 {
        (self.decorrelation_times * self.decorrelation_time(nu)).max(self.min_t_end)
    }

    /// SHA-256 of the canonical serialization, excluding the output path.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_valid_2d() {
        let c = ExperimentConfig::parse("").unwrap();
        assert_eq!(c.dimension, 2);
        assert_eq!(c.delta, 0.5);
        assert_eq!(c.batches, 20);
    }

    #[test]
    fn negative_delta_rejected() {
        let err = ExperimentConfig::parse("delta = -0.1").unwrap_err();
        assert!(err.to_string().contains("delta > 0"), "{err}");
    }

    #[test]
    fn three_d_growth_needs_s_above_seven_halves() {
        let err = ExperimentConfig::parse("dimension = 3\ngrid = 24\ns = 3.0\n[spectrum]\nkind = \"shell\"\nradius = 1.0\namplitude = 1.0\n")
            .unwrap_err();
        assert!(err.to_string().contains("s > 7/2"), "{err}");
    }

    #[test]
    fn all_violations_reported() {
        let err = ExperimentConfig::parse("delta = -1.0\nnu = []\nbatches = 1").unwrap_err();
        match err {
            Error::ConfigInvalid(v) => assert!(v.len() >= 3, "{v:?}"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn parse_error_has_position() {
        let err = ExperimentConfig::parse("grid = 64\ndelta = = 0.5\n").unwrap_err();
        match err {
            Error::ConfigParse { line, column, .. } => {
                assert_eq!(line, 2);
                assert!(column > 1);
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(ExperimentConfig::parse("gird = 64"), Err(Error::ConfigParse { .. })));
    }

    #[test]
    fn headroom_checked() {
        let err = ExperimentConfig::parse("grid = 16\n[spectrum]\nkind = \"annulus\"\nk = 4.0\nalpha = 1.0\n").unwrap_err();
        assert!(err.to_string().contains("headroom"), "{err}");
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.out = Some("/tmp/x".into());
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }
}
