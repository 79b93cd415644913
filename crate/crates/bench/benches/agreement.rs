use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use judgekit_bench::random_matrix;
use judgekit_core::{coincidence_matrix, krippendorff_alpha, Metric};

fn alpha_by_size(c: &mut Criterion) {
    let mut group = c.benchmark_group("alpha");
    for units in [100, 1_000, 10_000] {
        let m = random_matrix(units, 3, 0.05, 1);
        group.throughput(Throughput::Elements(units as u64));
        for metric in Metric::ALL {
            group.bench_with_input(BenchmarkId::new(metric.to_string(), units), &m, |b, m| {
                b.iter(|| krippendorff_alpha(black_box(m), metric).unwrap())
            });
        }
    }
    group.finish();
}

fn coincidences(c: &mut Criterion) {
    let m = random_matrix(5_000, 5, 0.1, 2);
    c.bench_function("coincidence_matrix/5000x5", |b| {
        b.iter(|| coincidence_matrix(black_box(&m)).unwrap())
    });
}

criterion_group!(benches, alpha_by_size, coincidences);
criterion_main!(benches);
