use balfuse::filtering::{backward_filter, forward_filter, GapMode};
use balfuse::fusion::{batch_oracle, fuse};
use balfuse::model::{balance, propagate_covariance};
use balfuse::numerics::{solve_lyapunov_continuous, sqrtm_spd};
use balfuse::simulate::{discrete_reference, exact_discretize_gap, simulate};
use balfuse_bench::{alternating, balanced_oscillator, oscillator};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DMatrix;
use std::hint::black_box;

fn numerics(c: &mut Criterion) {
    let n = 6;
    let a = DMatrix::from_fn(n, n, |i, j| if i == j { -1.0 } else { 0.1 * (i as f64 - j as f64) });
    let s = DMatrix::from_fn(n, n, |i, j| if i == j { 2.0 } else { 0.05 });
    c.bench_function("lyapunov_continuous_6", |b| b.iter(|| solve_lyapunov_continuous(black_box(&a), &s)));
    c.bench_function("sqrtm_spd_6", |b| b.iter(|| sqrtm_spd(black_box(&s))));
}

fn model(c: &mut Criterion) {
    let sys = oscillator(45.0, 0.01);
    c.bench_function("balance_t45_h001", |b| {
        b.iter(|| balance(&sys, &propagate_covariance(&sys).unwrap()).unwrap())
    });
    let bal = balanced_oscillator(5.0, 0.01);
    c.bench_function("exact_gap_2s", |b| b.iter(|| exact_discretize_gap(bal.system(), 1.0, 3.0).unwrap()));
}

fn filtering(c: &mut Criterion) {
    let mut group = c.benchmark_group("filter_pair_and_fuse");
    let bal = balanced_oscillator(45.0, 0.01);
    let traj = simulate(bal.system(), 1).unwrap();
    for mode in [GapMode::IncrementsOnly, GapMode::ProcessValues, GapMode::SignalLoss] {
        let pattern = alternating(mode, 45.0);
        group.bench_with_input(BenchmarkId::from_parameter(format!("{mode:?}")), &pattern, |b, p| {
            b.iter(|| {
                let fwd = forward_filter(&bal, p, &traj).unwrap();
                let bwd = backward_filter(&bal, p, &traj).unwrap();
                fuse(&fwd, &bwd).unwrap()
            })
        });
    }
    group.finish();
}

fn oracle(c: &mut Criterion) {
    let bal = balanced_oscillator(5.0, 0.01);
    let traj = simulate(bal.system(), 1).unwrap().subsample(5).unwrap();
    let disc = discrete_reference(&bal, &traj.grid).unwrap();
    let pattern = alternating(GapMode::ProcessValues, 5.0);
    c.bench_function("batch_oracle_100_steps", |b| {
        b.iter(|| batch_oracle(disc.system(), &pattern, &traj).unwrap())
    });
}

criterion_group! {
    name = kernels;
    config = Criterion::default().sample_size(10);
    targets = numerics, model, filtering, oracle
}
criterion_main!(kernels);
