use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use eavesdrop_core::qsim::{run_trajectory, GateSource};
use eavesdrop_core::sep::{generate_model_record, SamplerMethod};
use eavesdrop_core::stats::{binder_with_ci, DEFAULT_BOOTSTRAP};
use eavesdrop_core::{build_layout, InitKind};

fn trajectories(c: &mut Criterion) {
    let mut g = c.benchmark_group("trajectory");
    g.sample_size(10);
    for &n in &[8usize, 12, 16] {
        let layout = build_layout(n, n).unwrap();
        let init = InitKind::Dicke(n / 2);
        g.bench_with_input(BenchmarkId::new("statevector", n), &layout, |b, layout| {
            let mut seed = 0;
            b.iter(|| {
                seed += 1;
                black_box(run_trajectory(layout, 0.2, init, seed, GateSource::Haar, false).unwrap())
            })
        });
        for (name, method) in
            [("model_trajectory", SamplerMethod::Trajectory), ("model_marginal", SamplerMethod::Marginal)]
        {
            g.bench_with_input(BenchmarkId::new(name, n), &layout, |b, layout| {
                let mut seed = 0;
                b.iter(|| {
                    seed += 1;
                    black_box(generate_model_record(layout, 0.2, init, seed, true, method).unwrap())
                })
            });
        }
    }
    g.finish();
}

fn bootstrap(c: &mut Criterion) {
    let samples: Vec<f64> = (0..4000).map(|i| ((i * 7919) % 1000) as f64 / 1000.0).collect();
    c.bench_function("binder_bootstrap_4000", |b| {
        b.iter(|| binder_with_ci(black_box(&samples), DEFAULT_BOOTSTRAP, 1).unwrap())
    });
}

criterion_group!(benches, trajectories, bootstrap);
criterion_main!(benches);
