use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fluxcz::composite::{CompositeParams, CompositeSystem};
use fluxcz::dynamics::{InitialState, Simulation};
use fluxcz::floquet::{floquet_spectrum, FloquetDrive};
use fluxcz::par;
use fluxcz::pulse::ParametricPulse;

fn chevron_rows(c: &mut Criterion) {
    let system = CompositeSystem::new(CompositeParams::strong()).unwrap();
    let sim = Simulation::new(&system, fluxcz::dynamics::DEFAULT_DT).unwrap();
    let template = ParametricPulse::square(0.35, 0.045, 10.78, 20.0);
    let frame = sim.frame(&template, None).unwrap();
    let psi0 = InitialState::Dressed([1, 0, 1]);
    let freqs: Vec<f64> = (0..8).map(|k| 10.74 + 0.01 * k as f64).collect();
    let row = |f: &f64| {
        let pulse = ParametricPulse { drive_freq: *f, ..template };
        sim.propagate_in_frame(&frame, &pulse, None, &psi0, &[20.0], &[[1, 0, 1]]).unwrap().populations[0][0]
    };
    let mut g = c.benchmark_group("chevron_rows");
    g.sample_size(10);
    g.bench_with_input(BenchmarkId::new("parallel", freqs.len()), &freqs, |b, f| b.iter(|| par::map(f, row)));
    g.bench_with_input(BenchmarkId::new("sequential", freqs.len()), &freqs, |b, f| {
        b.iter(|| par::map_sequential(f, row))
    });
    g.finish();
}

fn floquet_points(c: &mut Criterion) {
    let system = CompositeSystem::new(CompositeParams::strong()).unwrap();
    let frame = system.labeled_spectrum(0.35).unwrap();
    let freqs: Vec<f64> = (0..8).map(|k| 10.74 + 0.01 * k as f64).collect();
    let point = |f: &f64| {
        floquet_spectrum(&system, &frame, FloquetDrive::new(0.35, 0.045, *f), fluxcz::dynamics::DEFAULT_DT)
            .unwrap()
            .quasienergies[0]
    };
    let mut g = c.benchmark_group("floquet_points");
    g.sample_size(10);
    g.bench_with_input(BenchmarkId::new("parallel", freqs.len()), &freqs, |b, f| b.iter(|| par::map(f, point)));
    g.bench_with_input(BenchmarkId::new("sequential", freqs.len()), &freqs, |b, f| {
        b.iter(|| par::map_sequential(f, point))
    });
    g.finish();
}

criterion_group!(benches, chevron_rows, floquet_points);
criterion_main!(benches);
