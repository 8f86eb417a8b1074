use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use darkline_bench::{baseline, parametric, weak_drive};
use darkline_core::{
    bright_dark_closed_form, integrate, run_sweep_with_threads, solve_config, stability, Axis,
    IntegrationSpec, SweepSpec,
};

fn steady_state(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve");
    for (name, config) in [
        ("baseline", baseline(1.0)),
        ("weak_drive", weak_drive(1.0)),
        ("parametric", parametric(1.0)),
    ] {
        group.bench_with_input(BenchmarkId::new("linsys", name), &config, |b, cfg| {
            b.iter(|| solve_config(black_box(cfg), black_box(0.3)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("closed_form", name), &config, |b, cfg| {
            b.iter(|| bright_dark_closed_form(black_box(cfg), black_box(0.3)).unwrap())
        });
    }
    group.finish();
}

fn eigenvalues(c: &mut Criterion) {
    let config = parametric(1.0);
    c.bench_function("stability/parametric", |b| {
        b.iter(|| stability(black_box(&config)))
    });
}

fn time_domain(c: &mut Criterion) {
    let config = baseline(1.0).at_detuning(0.5);
    let spec = IntegrationSpec::new(0.01 / config.max_rate(), 2.0, 100).unwrap();
    c.bench_function("rk4/baseline_10k_steps", |b| {
        b.iter(|| integrate(black_box(&config), &spec).unwrap())
    });
}

fn sweep(c: &mut Criterion) {
    let spec = SweepSpec::new(
        weak_drive(1.0),
        Axis::new(&["coop.c1", "coop.c2"], vec![0.1, 1.0, 10.0, 100.0]),
        (-50..=50).map(|k| k as f64 * 0.1).collect(),
    );
    c.bench_function("sweep/weak_drive_404_points", |b| {
        b.iter(|| run_sweep_with_threads(black_box(&spec), 1).unwrap())
    });
}

criterion_group!(benches, steady_state, eigenvalues, time_domain, sweep);
criterion_main!(benches);
