#![allow(clippy::field_reassign_with_default)]

use std::sync::Arc;

use approx::assert_relative_eq;
use tflab::config::ExperimentConfig;
use tflab::dynamics::SpdeState;
use tflab::ensemble::Execution;
use tflab::experiments::bourgain::run_bourgain_set_estimate;
use tflab::experiments::growth::{fit_alpha, run_growth};
use tflab::experiments::{
    alpha_star_2d, alpha_star_3d, run_3d_alternative_probe, run_simulate, run_viscosity_sweep, verify_invariants,
    Setup,
};
use tflab::field::{SpectralField, Velocity, Vorticity2D, C64};
use tflab::forcing::{NoiseSpectrum, NoiseTarget, SpectrumKind};
use tflab::grid::ModeGrid;
use tflab::rng::RngStream;
use tflab::stats::{
    g_identity_terms, tail_exponent, AccumulatorSpec, Interval, MomentAccumulator, Observable, Sample,
};
use tflab::Error;

/// Small linear-only 2D setup on the unit shell.
fn linear_cfg() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.grid = 16;
    cfg.spectrum = SpectrumKind::Shell {
        radius: 1.0,
        amplitude: 1.0,
    };
    cfg.nu = vec![0.1];
    cfg.sample_every = 0.5;
    cfg.decorrelation_times = 1.0;
    cfg.min_t_end = 4000.0;
    cfg.step.nonlinear = false;
    cfg.seed = 12;
    cfg
}

fn setup(cfg: ExperimentConfig) -> Setup {
    Setup::new(cfg, Execution::Sequential).unwrap()
}

#[test]
fn empty_viscosity_list_is_a_config_error() {
    let mut cfg = linear_cfg();
    cfg.nu.clear();
    match Setup::new(cfg, Execution::Sequential) {
        Err(Error::ConfigInvalid(v)) => assert!(v.iter().any(|m| m.contains("viscosity"))),
        other => panic!("expected a config error, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn hypotheses_are_named_in_validation_errors() {
    let text = "delta = -0.1\n";
    let e = ExperimentConfig::parse(text).unwrap_err();
    assert!(e.to_string().contains("delta > 0"), "{e}");
    let text = "dimension = 3\ngrid = 24\ns = 3.0\n";
    let e = ExperimentConfig::parse(text).unwrap_err();
    assert!(e.to_string().contains("s > 7/2"), "{e}");
    let e = ExperimentConfig::parse("grid = [").unwrap_err();
    assert!(matches!(e, Error::ConfigParse { line: 1, .. }), "{e}");
    let cfg = ExperimentConfig::parse("seed = 5\n").unwrap();
    assert_eq!(cfg.seed, 5);
    assert_eq!(cfg.grid, ExperimentConfig::default().grid);
}

#[test]
fn config_hash_ignores_the_output_path() {
    let a = linear_cfg();
    let mut b = a.clone();
    b.out = Some("elsewhere".into());
    assert_eq!(a.hash(), b.hash());
    b.seed += 1;
    assert_ne!(a.hash(), b.hash());
}

#[test]
fn linear_single_viscosity_row_passes_balance() {
    let s = setup(linear_cfg());
    let table = run_viscosity_sweep::<Vorticity2D>(&s, None, "h").unwrap();
    assert_eq!(table.rows.len(), 1);
    let b = &table.rows[0].analysis.balance;
    assert!(b.energy.verdict.passed(), "{:?}", b.energy);
    assert_relative_eq!(b.energy.target, 2.0);
}

#[test]
fn two_viscosities_share_their_targets() {
    let mut cfg = linear_cfg();
    cfg.nu = vec![0.2, 0.02];
    cfg.min_t_end = 200.0;
    let s = setup(cfg);
    let sum = run_simulate::<Vorticity2D>(&s, None, "h").unwrap();
    assert_eq!(sum.runs.len(), 2);
    assert_eq!(sum.runs[0].balance.energy.target, sum.runs[1].balance.energy.target);
}

#[test]
fn simulate_is_a_pure_function_of_config_and_seed() {
    let mut cfg = linear_cfg();
    cfg.min_t_end = 100.0;
    cfg.members = 2;
    let a = run_simulate::<Vorticity2D>(&setup(cfg.clone()), None, "h").unwrap();
    let b = run_simulate::<Vorticity2D>(&Setup::new(cfg, Execution::Parallel).unwrap(), None, "h").unwrap();
    assert_eq!(a.runs[0].mean_l2, b.runs[0].mean_l2);
    assert_eq!(a.runs[0].member_means, b.runs[0].member_means);
}

#[test]
fn verify_suite_passes_on_default_config() {
    let report = verify_invariants(&setup(ExperimentConfig::default())).unwrap();
    for c in &report.checks {
        assert!(c.verdict.passed(), "{c:?}");
    }
    assert!(report.passed());
}

#[test]
fn theorem_exponents() {
    assert_relative_eq!(alpha_star_2d(2.0, 0.5), 2.0 / 3.0, epsilon = 1e-15);
    assert_relative_eq!(alpha_star_3d(2.0, 3.6), 2.0 / 5.2, epsilon = 1e-15);
}

#[test]
fn steady_eigenfunction_does_not_grow() {
    let mut cfg = ExperimentConfig::default();
    cfg.grid = 32;
    cfg.growth.grid = 32;
    cfg.growth.horizon = 16.0;
    let s = setup(cfg);
    let mut xi = Vorticity2D::zeros(Arc::clone(&s.grid));
    xi.set_mode([1, 1], C64::new(-0.25, 0.0));
    xi.set_mode([1, -1], C64::new(0.25, 0.0));
    let recs = run_growth(&s, &[(0.0, xi)]).unwrap();
    let r = &recs[0];
    assert!(r.error.is_none());
    assert_eq!(r.checkpoints, vec![1.0, 2.0, 4.0, 8.0, 16.0]);
    assert!(r.running_max_monotone());
    let a = r.alpha_hat.expect("enough checkpoints");
    assert!(a.abs() < 1e-6, "alpha_hat {a}");
    assert_eq!(fit_alpha(r), r.alpha_hat);
    assert!(r.grad_vorticity_linf.iter().all(|&g| (g - r.grad_vorticity_linf[0]).abs() < 1e-6));
}

fn bourgain_cfg() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.grid = 16;
    cfg.spectrum = SpectrumKind::Annulus { k: 2.0, alpha: 1.0 };
    cfg.nu = vec![0.05];
    cfg.min_t_end = 20.0;
    cfg.decorrelation_times = 1.0;
    cfg.bourgain.members = 8;
    cfg.bourgain.doubling_samples = 2;
    cfg.bourgain.doubling_horizon = 2.0;
    cfg
}

#[test]
fn single_checkpoint_exit_fraction_is_the_tail() {
    let mut cfg = bourgain_cfg();
    cfg.bourgain.doubling_constant = Some(4.0);
    cfg.bourgain.lambdas = vec![2.0];
    // τ = 2, so T = 1 < τ keeps only the initial checkpoint
    cfg.bourgain.horizons = vec![1.0];
    let t = run_bourgain_set_estimate::<Vorticity2D>(&setup(cfg), None, "h").unwrap();
    let cell = &t.cells[0];
    assert_eq!(cell.checkpoints, 1);
    assert_relative_eq!(cell.tau, 2.0);
    assert_eq!(cell.exit_fraction, cell.pooled_tail);
    assert!(cell.verdict.passed());
}

#[test]
fn exit_fraction_vanishes_for_huge_balls() {
    let mut cfg = bourgain_cfg();
    cfg.bourgain.lambdas = vec![1e6];
    cfg.bourgain.horizons = vec![0.5, 1.0];
    let t = run_bourgain_set_estimate::<Vorticity2D>(&setup(cfg), None, "h").unwrap();
    for c in &t.cells {
        assert_eq!(c.exit_fraction, 0.0);
        assert!(c.verdict.passed());
    }
    assert_eq!(t.doubling_probes.len(), 2);
}

fn probe_cfg() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.dimension = 3;
    cfg.grid = 8;
    cfg.spectrum = SpectrumKind::Shell {
        radius: 1.0,
        amplitude: 1.0,
    };
    cfg.nu = vec![0.2, 0.1];
    cfg.sample_every = 0.5;
    cfg.decorrelation_times = 1.0;
    cfg.min_t_end = 1000.0;
    cfg.step.nonlinear = false;
    cfg.probe3d.galerkin = vec![1.0, 2.0];
    cfg.growth.grid = 8;
    cfg
}

#[test]
fn zero_spectrum_probe_is_the_dirac_at_zero() {
    let mut cfg = probe_cfg();
    cfg.spectrum = SpectrumKind::Shell {
        radius: 1.0,
        amplitude: 0.0,
    };
    cfg.min_t_end = 100.0;
    cfg.step.nonlinear = true;
    let rows = run_3d_alternative_probe(&setup(cfg), None, "h").unwrap();
    assert_eq!(rows.len(), 4);
    for r in rows {
        assert_eq!(r.mean_l2, 0.0);
        assert_eq!(r.mean_h1_delta, 0.0);
    }
}

#[test]
fn linear_probe_matches_the_truncated_constant() {
    let rows = run_3d_alternative_probe(&setup(probe_cfg()), None, "h").unwrap();
    for r in &rows {
        // the shell lies inside every probed radius, so B₀ stabilizes
        assert_relative_eq!(r.b0_half, rows[0].b0_half);
        assert!(
            (r.mean_h1_delta - r.b0_half).abs() <= r.mean_h1_delta_ci.max(0.1 * r.b0_half),
            "{r:?}"
        );
    }
}

#[test]
fn probe_requires_three_dimensions() {
    assert!(run_3d_alternative_probe(&setup(linear_cfg()), None, "h").is_err());
}

fn acc_2d() -> (MomentAccumulator, NoiseSpectrum, Arc<ModeGrid>) {
    let g = Arc::new(ModeGrid::new(2, 16).unwrap());
    let s = NoiseSpectrum::new(Arc::clone(&g), SpectrumKind::Annulus { k: 2.0, alpha: 1.0 }).unwrap();
    let acc = MomentAccumulator::new(AccumulatorSpec::for_spectrum(&s, 0.5, vec![2.0]));
    (acc, s, g)
}

#[test]
fn accumulating_zero_and_a_sine() {
    let (mut acc, s, g) = acc_2d();
    acc.accumulate((0, 0), &Vorticity2D::zeros(Arc::clone(&g)), &s).unwrap();
    assert_eq!(acc.series(Observable::L2), vec![0.0]);
    assert_eq!(acc.series(Observable::ExpMoment), vec![1.0]);
    let mut xi = Vorticity2D::zeros(Arc::clone(&g));
    xi.set_mode([1, 0], C64::new(0.5, 0.0));
    acc.accumulate((0, 1), &xi, &s).unwrap();
    assert_relative_eq!(acc.series(Observable::L2)[1], 0.5, epsilon = 1e-15);
    assert!(acc.accumulate((0, 1), &xi, &s).is_err());
    assert_eq!(acc.count(), 2);
}

#[test]
fn equal_samples_give_a_degenerate_tail_fit() {
    assert!(matches!(tail_exponent(&[1.5; 2000], 0.5, 2.0), Err(Error::DegenerateFit(_))));
    assert!(matches!(
        tail_exponent(&[1.5; 10], 0.5, 2.0),
        Err(Error::InsufficientData { .. })
    ));
}

#[test]
fn empty_gamma_set_zeroes_both_terms() {
    let (_, s, g) = acc_2d();
    let mut rng = RngStream::new(1, 1);
    let mut u = Velocity::zeros(Arc::clone(&g));
    u.add_gaussian(&vec![1.0; g.len()], &mut rng);
    let sample = Sample::measure(&u, &s, 0.5, &[2.0]);
    assert_eq!(g_identity_terms(&sample, s.b_constant(0.0), Interval::empty()), (0.0, 0.0));
}

#[test]
fn zero_field_state_round_trips() {
    let g = Arc::new(ModeGrid::new(3, 8).unwrap());
    let st = SpdeState::new(Velocity::zeros(g), 0.1, 0.5, Some(2.0), RngStream::new(3, 4)).unwrap();
    let back: SpdeState<Velocity> = tflab::checkpoint::decode(&tflab::checkpoint::encode(&st)).unwrap();
    assert_eq!(back.field.components(), st.field.components());
    assert_eq!(back.galerkin, Some(2.0));
}
