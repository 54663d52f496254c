use std::ops::ControlFlow;
use std::sync::Arc;

use tflab::checkpoint::{decode, encode, load_checkpoint, save_checkpoint};
use tflab::dynamics::{doubling_time, integrate, Every, Flow, SpdeState, StepControl, Stepper};
use tflab::experiments::verify::random_field;
use tflab::field::{SpectralField, Velocity, Vorticity2D, C64};
use tflab::forcing::{NoiseSpectrum, SpectrumKind};
use tflab::grid::ModeGrid;
use tflab::rng::RngStream;
use tflab::spectral::{linf_vorticity, Workspace};

fn grid(dim: usize, m: usize) -> Arc<ModeGrid> {
    Arc::new(ModeGrid::new(dim, m).unwrap())
}

fn euler_ctrl(dt: f64) -> StepControl {
    StepControl {
        fixed_dt: Some(dt),
        h_max: dt,
        ..StepControl::default()
    }
}

fn evolve<F: Flow>(u0: F, t: f64, ctrl: &StepControl, galerkin: Option<f64>) -> F {
    let mut stepper = Stepper::new(Arc::clone(u0.grid()), ctrl.clone(), None).unwrap();
    let mut st = SpdeState::new(u0, 0.0, 0.5, galerkin, RngStream::new(0, 0)).unwrap();
    integrate(&mut stepper, &mut st, t, &mut []).unwrap();
    st.field
}

/// Random smooth field rescaled to unit peak speed.
fn unit_field<F: Flow>(g: &Arc<ModeGrid>, scale: f64, galerkin: Option<f64>, seed: u64) -> F {
    let mut rng = RngStream::new(seed, 0);
    let mut f: F = random_field(g, scale, galerkin, &mut rng);
    let mut ws = Workspace::new(Arc::clone(g));
    let peak = f.max_speed(&mut ws).unwrap();
    f.scale(1.0 / peak);
    f
}

fn max_diff<F: SpectralField>(a: &F, b: &F) -> f64 {
    a.components()
        .iter()
        .zip(b.components())
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).norm()))
        .fold(0.0, f64::max)
}

fn max_abs<F: SpectralField>(a: &F) -> f64 {
    a.components().iter().flatten().map(|v| v.norm()).fold(0.0, f64::max)
}

#[test]
fn euler_2d_is_time_reversible() {
    // u(t) solves Euler ⇒ −u(−t) does too
    let g = grid(2, 32);
    let u0: Vorticity2D = unit_field(&g, 3.0, None, 1);
    let ctrl = euler_ctrl(0.01);
    let mut mid = evolve(u0.clone(), 0.5, &ctrl, None);
    mid.scale(-1.0);
    let mut back = evolve(mid, 0.5, &ctrl, None);
    back.scale(-1.0);
    let err = max_diff(&back, &u0) / max_abs(&u0);
    assert!(err < 1e-7, "reversal error {err}");
}

#[test]
fn euler_3d_galerkin_is_time_reversible() {
    let g = grid(3, 16);
    let u0: Velocity = unit_field(&g, 2.0, Some(4.0), 2);
    let ctrl = euler_ctrl(0.01);
    let mut mid = evolve(u0.clone(), 0.3, &ctrl, Some(4.0));
    mid.scale(-1.0);
    let mut back = evolve(mid, 0.3, &ctrl, Some(4.0));
    back.scale(-1.0);
    let err = max_diff(&back, &u0) / max_abs(&u0);
    assert!(err < 1e-7, "reversal error {err}");
}

#[test]
fn vorticity_sup_is_nearly_transported() {
    let g = grid(2, 128);
    let xi0: Vorticity2D = unit_field(&g, 1.0, None, 3);
    let w0 = linf_vorticity(&xi0);
    let ctrl = StepControl {
        c_cfl: 0.25,
        h_max: 0.05,
        ..StepControl::default()
    };
    let xi = evolve(xi0, 5.0, &ctrl, None);
    let drift = (linf_vorticity(&xi) - w0).abs() / w0;
    assert!(drift <= 0.02, "sup drift {drift}");
}

fn forced_state(seed: u64) -> (Stepper<Vorticity2D>, SpdeState<Vorticity2D>) {
    let g = grid(2, 32);
    let spec = NoiseSpectrum::new(Arc::clone(&g), SpectrumKind::Annulus { k: 2.0, alpha: 1.0 }).unwrap();
    let stepper = Stepper::new(Arc::clone(&g), StepControl::default(), Some(spec)).unwrap();
    let mut rng = RngStream::new(seed, 7);
    let xi: Vorticity2D = random_field(&g, 3.0, None, &mut rng);
    let st = SpdeState::new(xi, 0.05, 0.5, None, RngStream::new(seed, 9)).unwrap();
    (stepper, st)
}

#[test]
fn checkpoint_resume_is_bit_exact() {
    let (mut stepper, mut whole) = forced_state(11);
    let mut split = whole.clone();
    // the split time must be an observation time of the uninterrupted run
    let mut tick = Every::new(1.0, |_: &SpdeState<Vorticity2D>| Ok(ControlFlow::Continue(())));
    integrate(&mut stepper, &mut whole, 2.0, &mut [&mut tick]).unwrap();

    integrate(&mut stepper, &mut split, 1.0, &mut []).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.bin");
    save_checkpoint(&split, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..5], b"TFLAB");
    let (mut fresh, _) = forced_state(11);
    let mut resumed: SpdeState<Vorticity2D> = load_checkpoint(&path).unwrap();
    integrate(&mut fresh, &mut resumed, 2.0, &mut []).unwrap();

    assert_eq!(resumed.time, whole.time);
    assert_eq!(resumed.rng.counter(), whole.rng.counter());
    assert_eq!(resumed.field.coeffs(), whole.field.coeffs());
}

#[test]
fn checkpoint_rejects_a_foreign_header() {
    let (_, st) = forced_state(1);
    let mut bytes = encode(&st);
    bytes[0] = b'X';
    assert!(decode::<Vorticity2D>(&bytes).is_err());
    let bytes = encode(&st);
    assert!(decode::<Vorticity2D>(&bytes[..bytes.len() - 3]).is_err());
    assert!(decode::<Velocity>(&bytes).is_err());
}

#[test]
fn doubling_time_scales_inversely_with_amplitude() {
    // Euler is invariant under u(x, t) → λ u(x, λ t)
    let g = grid(2, 32);
    let mut xi = Vorticity2D::zeros(Arc::clone(&g));
    xi.set_mode([1, 0], C64::new(0.5, 0.0));
    xi.set_mode([0, 1], C64::new(0.0, 0.4));
    xi.set_mode([2, 1], C64::new(0.3, 0.1));
    let ctrl = StepControl {
        c_cfl: 0.2,
        h_max: 0.01,
        ..StepControl::default()
    };
    let t1 = doubling_time(&xi, 3.0, 20.0, 0.01, &ctrl, None).unwrap();
    let mut fast = xi.clone();
    fast.scale(2.0);
    let t2 = doubling_time(&fast, 3.0, 20.0, 0.01, &ctrl, None).unwrap();
    let (t1, t2) = (t1.expect("doubles"), t2.expect("doubles"));
    assert!((t2 - t1 / 2.0).abs() <= 0.03, "{t1} vs {t2}");
}

#[test]
fn doubling_time_of_zero_is_rejected() {
    let g = grid(2, 16);
    let xi = Vorticity2D::zeros(g);
    assert!(doubling_time(&xi, 2.0, 1.0, 0.1, &StepControl::default(), None).is_err());
}

#[test]
fn end_before_start_is_rejected() {
    let (mut stepper, mut st) = forced_state(2);
    st.time = 1.0;
    assert!(integrate(&mut stepper, &mut st, 0.5, &mut []).is_err());
}
