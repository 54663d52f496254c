use std::sync::Arc;

use proptest::prelude::*;
use tflab::checkpoint::{decode, encode};
use tflab::dynamics::SpdeState;
use tflab::experiments::verify::random_field;
use tflab::field::{hermitian_defect, inner_l2, sobolev_norm_sq, SobolevIndex, SpectralField, Velocity, Vorticity2D, C64};
use tflab::forcing::{NoiseSpectrum, OuPropagator, SpectrumKind};
use tflab::grid::ModeGrid;
use tflab::report::fmt_f64;
use tflab::rng::RngStream;
use tflab::spectral::{advection_2d, biot_savart, curl2d, galerkin_project, leray_project, Workspace};
use tflab::stats::{AccumulatorSpec, MomentAccumulator, Sample};

fn grid(dim: usize, m: usize) -> Arc<ModeGrid> {
    Arc::new(ModeGrid::new(dim, m).unwrap())
}

fn vort(seed: u64, scale: f64) -> Vorticity2D {
    random_field(&grid(2, 16), scale, None, &mut RngStream::new(seed, 0))
}

/// Unprojected 3D field: independent Gaussian components, Hermitian.
fn rough_velocity(seed: u64) -> Velocity {
    let g = grid(3, 8);
    let mut rng = RngStream::new(seed, 1);
    let mut comps = vec![vec![C64::new(0.0, 0.0); g.len()]; 3];
    for c in comps.iter_mut() {
        for &(a, b) in g.half_modes() {
            let z = C64::new(rng.normal(), rng.normal());
            c[a] = z;
            c[b] = z.conj();
        }
    }
    Velocity::from_components(g, comps)
}

fn max_diff<F: SpectralField>(a: &F, b: &F) -> f64 {
    a.components()
        .iter()
        .zip(b.components())
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).norm()))
        .fold(0.0, f64::max)
}

fn sample(seed: u64) -> Sample {
    let mut rng = RngStream::new(seed, 5);
    Sample {
        l2: rng.uniform(),
        h1: rng.uniform(),
        h1d: rng.uniform(),
        h2d: rng.uniform(),
        forced: rng.uniform(),
        sigma_norms: vec![rng.uniform()],
    }
}

fn spec() -> AccumulatorSpec {
    AccumulatorSpec {
        dim: 2,
        delta: 0.5,
        gamma: 0.1,
        sigmas: vec![2.0],
        hist_max: 1.0,
        hist_bins: 16,
    }
}

fn acc_of(keys: &[u64]) -> MomentAccumulator {
    let mut a = MomentAccumulator::new(spec());
    for &k in keys {
        a.insert((k % 3, k), sample(k)).unwrap();
    }
    a
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn merge_is_associative_and_commutative(keys in prop::collection::btree_set(0u64..500, 3..40), cut1 in 0usize..40, cut2 in 0usize..40) {
        let keys: Vec<u64> = keys.into_iter().collect();
        let (i, j) = (cut1.min(cut2).min(keys.len()), cut1.max(cut2).min(keys.len()));
        let (a, b, c) = (acc_of(&keys[..i]), acc_of(&keys[i..j]), acc_of(&keys[j..]));
        let left = a.clone().merge(b.clone()).unwrap().merge(c.clone()).unwrap();
        let right = a.clone().merge(b.clone().merge(c.clone()).unwrap()).unwrap();
        let swapped = c.merge(b).unwrap().merge(a).unwrap();
        let whole = acc_of(&keys);
        prop_assert_eq!(&left, &whole);
        prop_assert_eq!(&right, &whole);
        prop_assert_eq!(&swapped, &whole);
        prop_assert_eq!(whole.count(), keys.len());
        let mass: f64 = whole.histogram().iter().sum();
        prop_assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noise_increments_are_real_and_divergence_free(seed in any::<u64>(), h in 1e-3f64..10.0) {
        let g = grid(3, 8);
        let s = NoiseSpectrum::new(Arc::clone(&g), SpectrumKind::Annulus { k: 1.0, alpha: 1.0 }).unwrap();
        let p = OuPropagator::new(&s, h, 0.3, 0.5);
        let mut u = Velocity::zeros(g);
        p.add_increment(&mut u, &mut RngStream::new(seed, 2));
        prop_assert!(hermitian_defect(&u) < 1e-14);
        prop_assert!(u.max_divergence() < 1e-12);
        let g2 = grid(2, 16);
        let s2 = NoiseSpectrum::new(Arc::clone(&g2), SpectrumKind::Annulus { k: 2.0, alpha: 1.0 }).unwrap();
        let mut xi = Vorticity2D::zeros(g2);
        OuPropagator::new(&s2, h, 0.3, 0.5).add_increment(&mut xi, &mut RngStream::new(seed, 3));
        prop_assert!(hermitian_defect(&xi) < 1e-14);
    }

    #[test]
    fn leray_is_an_idempotent_projection_commuting_with_galerkin(seed in any::<u64>(), radius in 1.0f64..5.0) {
        let u = rough_velocity(seed);
        let p = leray_project(&u);
        prop_assert!(p.max_divergence() < 1e-12);
        prop_assert!(max_diff(&leray_project(&p), &p) < 1e-14);
        let a = galerkin_project(&p, radius);
        let b = leray_project(&galerkin_project(&u, radius));
        prop_assert!(max_diff(&a, &b) < 1e-14);
        // orthogonal: ⟨u − Pu, Pu⟩ = 0
        let mut r = u.clone();
        r.axpy(-1.0, &p);
        prop_assert!(inner_l2(&r, &p).abs() < 1e-10 * inner_l2(&u, &u));
    }

    #[test]
    fn curl_inverts_biot_savart(seed in any::<u64>(), scale in 0.5f64..6.0) {
        let xi = vort(seed, scale);
        let back = curl2d(&biot_savart(&xi));
        let peak = xi.coeffs().iter().map(|v| v.norm()).fold(0.0, f64::max);
        prop_assert!(max_diff(&back, &xi) <= 1e-14 * peak.max(1.0));
    }

    #[test]
    fn transport_is_orthogonal_to_vorticity(seed in any::<u64>(), scale in 0.5f64..4.0) {
        let xi = vort(seed, scale);
        let mut ws = Workspace::new(Arc::clone(xi.grid()));
        let adv = advection_2d(&mut ws, &xi).unwrap();
        let scale = (inner_l2(&adv, &adv) * inner_l2(&xi, &xi)).sqrt();
        prop_assert!(inner_l2(&adv, &xi).abs() <= 1e-12 * scale.max(1e-300));
    }

    #[test]
    fn sobolev_norms_increase_with_order(seed in any::<u64>(), s in -1.0f64..4.0, ds in 0.0f64..2.0) {
        let u = biot_savart(&vort(seed, 3.0));
        let lo = sobolev_norm_sq(&u, SobolevIndex::inhomogeneous(s));
        let hi = sobolev_norm_sq(&u, SobolevIndex::inhomogeneous(s + ds));
        prop_assert!(hi >= lo * (1.0 - 1e-14));
        // every mode has |n| ≥ 1
        let lo = sobolev_norm_sq(&u, SobolevIndex::homogeneous(s));
        let hi = sobolev_norm_sq(&u, SobolevIndex::homogeneous(s + ds));
        prop_assert!(hi >= lo * (1.0 - 1e-14));
    }

    #[test]
    fn interpolation_inequality_holds_per_field(seed in any::<u64>(), scale in 0.5f64..6.0, delta in 0.05f64..2.0) {
        let u = biot_savart(&vort(seed, scale));
        let a = sobolev_norm_sq(&u, SobolevIndex::homogeneous(1.0 + delta));
        let b = sobolev_norm_sq(&u, SobolevIndex::homogeneous(1.0));
        let c = sobolev_norm_sq(&u, SobolevIndex::homogeneous(2.0 + delta));
        let bound = b.powf(1.0 / (1.0 + delta)) * c.powf(delta / (1.0 + delta));
        prop_assert!(a <= bound * (1.0 + 1e-12));
    }

    #[test]
    fn checkpoint_round_trip_preserves_the_next_draw(seed in any::<u64>(), stream in any::<u64>(), draws in 0usize..50, t in 0.0f64..1e3) {
        let mut rng = RngStream::new(seed, stream);
        for _ in 0..draws {
            rng.normal();
        }
        let xi = vort(seed, 2.0);
        let mut st = SpdeState::new(xi, 0.01, 0.5, None, rng).unwrap();
        st.time = t;
        let mut back: SpdeState<Vorticity2D> = decode(&encode(&st)).unwrap();
        prop_assert_eq!(back.field.coeffs(), st.field.coeffs());
        prop_assert_eq!(back.time.to_bits(), st.time.to_bits());
        prop_assert_eq!(back.rng.normal().to_bits(), st.rng.normal().to_bits());
    }

    #[test]
    fn floats_round_trip_through_reports(x in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        let back: f64 = fmt_f64(x).parse().unwrap();
        prop_assert_eq!(back.to_bits(), x.to_bits());
    }
}
