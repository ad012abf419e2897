use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

use rmt_core::cf::{ecf_scalar, ecf_scalar_seq, TGrid};
use rmt_core::ensembles::{sample_batch, sample_batch_seq, sample_standard_normals, EnsembleSpec};
use rmt_core::rng::SeedSpec;

fn ecf(c: &mut Criterion) {
    let grid = TGrid::default();
    let mut group = c.benchmark_group("ecf_scalar");
    for n in [10_000usize, 100_000] {
        let xs = sample_standard_normals(n, SeedSpec::new(1, 0));
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::new("parallel", n), &xs, |b, xs| {
            b.iter(|| ecf_scalar(black_box(xs), &grid, 0.01).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("sequential", n), &xs, |b, xs| {
            b.iter(|| ecf_scalar_seq(black_box(xs), &grid, 0.01).unwrap())
        });
    }
    group.finish();
}

fn sampling(c: &mut Criterion) {
    let mut group = c.benchmark_group("sample_batch_goe4");
    let spec = EnsembleSpec::goe(4);
    let n = 50_000usize;
    group.throughput(Throughput::Elements(n as u64));
    group.bench_function("parallel", |b| {
        b.iter(|| sample_batch(&spec, black_box(n), SeedSpec::new(2, 0)).unwrap())
    });
    group.bench_function("sequential", |b| {
        b.iter(|| sample_batch_seq(&spec, black_box(n), SeedSpec::new(2, 0)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, ecf, sampling);
criterion_main!(benches);
