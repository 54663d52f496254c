use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tflab::dynamics::{integrate, SpdeState, StepControl, Stepper};
use tflab::ensemble::{run_members, Execution};
use tflab::experiments::verify::random_field;
use tflab::field::Vorticity2D;
use tflab::forcing::{NoiseSpectrum, SpectrumKind};
use tflab::grid::ModeGrid;
use tflab::rng::RngStream;

/// One forced trajectory of length `t` per member.
fn ensemble(grid: &Arc<ModeGrid>, members: usize, t: f64, exec: Execution) -> f64 {
    let spec = NoiseSpectrum::new(Arc::clone(grid), SpectrumKind::Annulus { k: 2.0, alpha: 1.0 }).unwrap();
    let out = run_members(members, exec, |m| {
        let mut stepper = Stepper::new(Arc::clone(grid), StepControl::default(), Some(spec.clone()))?;
        let mut rng = RngStream::new(m as u64, 1);
        let xi: Vorticity2D = random_field(grid, 2.0, None, &mut rng);
        let mut st = SpdeState::new(xi, 0.05, 0.5, None, RngStream::new(m as u64, 2))?;
        integrate(&mut stepper, &mut st, t, &mut [])?;
        Ok(st.field.coeffs()[1].re)
    })
    .unwrap();
    out.iter().sum()
}

fn bench_ensemble(c: &mut Criterion) {
    let mut group = c.benchmark_group("ensemble");
    group.sample_size(10);
    for m in [32usize, 64] {
        let grid = Arc::new(ModeGrid::new(2, m).unwrap());
        for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
            group.bench_with_input(BenchmarkId::new(name, m), &grid, |b, g| {
                b.iter(|| ensemble(g, 8, 0.5, exec));
            });
        }
    }
    group.finish();
}

criterion_group!(benches, bench_ensemble);
criterion_main!(benches);
