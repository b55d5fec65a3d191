use std::f64::consts::TAU;

use ane_core::poles::estimate_all;
use ane_core::scenario_io::load_scenario;
use ane_core::tf::{sweep, sweep_grid, transfer_functions};
use ane_core::{Execution, Strategy};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use num_complex::Complex64;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn sweeps(c: &mut Criterion) {
    let s = load_scenario("fig4").unwrap();
    let mut g = c.benchmark_group("sweep_fig4_4096");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| sweep(&s, 0, Strategy::Common, 4096, 1.0, exec).unwrap())
        });
    }
    g.finish();
}

fn poles(c: &mut Criterion) {
    let s = load_scenario("fig5").unwrap();
    let mut g = c.benchmark_group("poles_fig5");
    g.sample_size(20);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| estimate_all(&s, Strategy::Multiple, exec).unwrap())
        });
    }
    g.finish();
}

// all sensors of every fixture on a shared grid, the shape of the oracle batch
fn batch(c: &mut Criterion) {
    let scenarios: Vec<_> = ["fig3_beta05", "fig4", "fig5", "probe_single"]
        .iter()
        .map(|n| load_scenario(n).unwrap())
        .collect();
    let grid: Vec<f64> = sweep_grid(256).into_iter().skip(1).collect();
    let n = scenarios.len() * grid.len();
    let mut g = c.benchmark_group("batch_256");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                exec.map(n, |i| {
                    let z = Complex64::from_polar(1.0, TAU * grid[i % grid.len()]);
                    transfer_functions(z, &scenarios[i / grid.len()], Strategy::Common).map(|v| v.residual)
                })
            })
        });
    }
    g.finish();
}

criterion_group!(benches, sweeps, poles, batch);
criterion_main!(benches);
