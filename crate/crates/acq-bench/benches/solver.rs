//! Criterion benchmarks for the dual-bisection allocator.
//!
//! Three measurements, mirroring how the solver spends its time:
//!
//! * `g_of_lambda` — one excess-usage evaluation, the inner loop of the
//!   bisection;
//! * `solve` — the full pipeline (bisect, decide, repair, upgrade) at two
//!   sizes, reported with element throughput;
//! * `solve_sampled` — the large-instance path that prices the dual on a
//!   20% sample before the single full decision pass.

use std::hint::black_box;
use std::time::Duration;

use acq_bench::sized_instance;
use acq_core::allocator::{g_of_lambda, solve, solve_sampled};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

fn bench_g_of_lambda(c: &mut Criterion) {
    let instance = sized_instance(20_000, 11);
    c.bench_function("g_of_lambda/20k", |b| {
        b.iter(|| g_of_lambda(black_box(&instance), black_box(0.02)));
    });
}

fn bench_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve");
    for &n in &[5_000usize, 20_000] {
        let instance = sized_instance(n, 11);
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &instance, |b, inst| {
            b.iter(|| solve(black_box(inst), 1e-9).unwrap());
        });
    }
    group.finish();
}

fn bench_solve_sampled(c: &mut Criterion) {
    let instance = sized_instance(100_000, 11);
    let mut group = c.benchmark_group("solve_sampled");
    group.sample_size(10);
    group.measurement_time(Duration::from_secs(8));
    group.throughput(Throughput::Elements(instance.items.len() as u64));
    group.bench_function("100k/fraction_0.2", |b| {
        b.iter(|| solve_sampled(black_box(&instance), 0.2, 1e-9, 7).unwrap());
    });
    group.finish();
}

criterion_group!(benches, bench_g_of_lambda, bench_solve, bench_solve_sampled);
criterion_main!(benches);
