use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use slowvar::ssa::{simulate, Recorder};
use slowvar::systems::{bistable, linear, BistableParams};
use slowvar::{
    build_table, run_cssa, solve_truncated_cme, Estimator, NmaClosure, RandomStream, SimOptions, SolverOptions,
    StateVector, StoppingRule, TruncatedDomain,
};

fn ssa(c: &mut Criterion) {
    let (net, _) = bistable(&BistableParams::default());
    let x0 = StateVector::new(vec![100, 100]);
    c.bench_function("ssa_bistable_t0.1", |b| {
        b.iter(|| {
            let mut rng = RandomStream::new(1, 0);
            simulate(&net, &x0, 0.1, &mut rng, Recorder::Final).unwrap().events
        })
    });
}

fn cssa(c: &mut Criterion) {
    let (net, proj) = linear(1.0, 1.0, 100.0, 200.0);
    let opts = SimOptions::default();
    c.bench_function("cssa_linear_k200_1e3_slow", |b| {
        b.iter(|| {
            let mut rng = RandomStream::new(1, 0);
            run_cssa(&net, &proj, black_box(200), StoppingRule::SlowEvents(1000), &mut rng, &opts).unwrap()
        })
    });
    let grid: Vec<i64> = (101..=300).collect();
    c.bench_function("nma_table_linear_1e3_fast", |b| {
        b.iter(|| {
            build_table(&net, &proj, &grid, &Estimator::Nma(1000, NmaClosure::MeanField), 1, 1, &opts).unwrap()
        })
    });
}

fn cme(c: &mut Criterion) {
    let (net, proj) = linear(1.0, 1.0, 100.0, 10.0);
    let domain = TruncatedDomain::new(vec![150, 150]).unwrap();
    let opts = SolverOptions {
        tol: 1e-10,
        ..SolverOptions::default()
    };
    let mut g = c.benchmark_group("cme");
    g.sample_size(10);
    g.bench_function("linear_150x150", |b| {
        b.iter(|| solve_truncated_cme(&net, &domain, Some(&proj), &opts).unwrap().residual)
    });
    g.finish();
}

criterion_group!(benches, ssa, cssa, cme);
criterion_main!(benches);
