use std::f64::consts::PI;
use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use precs_core::dynamics::{qubit_branches, uniform_times, ModelSpec};
use precs_core::manifold::build_plane_grid;
use precs_core::outcome::{born_statistics_from_masses, masses_at};
use precs_core::par::{with_execution, Execution};
use precs_core::precs::{chi_squared, decoherence_intervals};

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn bench_chi_squared(c: &mut Criterion) {
    let model = ModelSpec::qubit_boson(1.0, 2.0).unwrap();
    let branches = qubit_branches(0.5);
    let mut group = c.benchmark_group("chi_squared");
    for n in [256, 512] {
        let grid = Arc::new(build_plane_grid(12.0, n).unwrap());
        for (name, mode) in MODES {
            group.bench_with_input(BenchmarkId::new(name, n), &grid, |b, grid| {
                b.iter(|| {
                    with_execution(mode, || {
                        chi_squared(&model, &branches, black_box(PI / 2.0), grid).unwrap()
                    })
                })
            });
        }
    }
    group.finish();
}

fn bench_intervals(c: &mut Criterion) {
    let model = ModelSpec::qubit_boson(1.0, 2.0).unwrap();
    let branches = qubit_branches(0.5);
    let grid = Arc::new(build_plane_grid(12.0, 128).unwrap());
    let times = uniform_times(2.0 * PI, 64);
    let mut group = c.benchmark_group("decoherence_intervals");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| {
                with_execution(mode, || {
                    decoherence_intervals(&model, &branches, &times, &grid, 1e-3).unwrap()
                })
            })
        });
    }
    group.finish();
}

fn bench_sampling(c: &mut Criterion) {
    let model = ModelSpec::qubit_boson(1.0, 2.0).unwrap();
    let branches = qubit_branches(0.7);
    let grid = Arc::new(build_plane_grid(12.0, 128).unwrap());
    let masses = masses_at(&model, &branches, PI, &grid, 1e-3).unwrap();
    let mut group = c.benchmark_group("born_statistics");
    for (name, mode) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| {
                with_execution(mode, || {
                    born_statistics_from_masses(&masses, &model, &branches, PI, 10_000, 42).unwrap()
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_chi_squared, bench_intervals, bench_sampling);
criterion_main!(benches);
