use std::collections::HashSet;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use taco_bench::random_graph;
use taco_core::{repro_coarsen, ImportanceMeasure};

fn bench_repro(c: &mut Criterion) {
    let mut group = c.benchmark_group("repro_coarsen");
    for m in [10_000usize, 20_000, 40_000, 80_000, 160_000] {
        let n = m / 5;
        let (g, h) = random_graph(n, m, 16, 42);
        group.throughput(Throughput::Elements(m as u64));
        group.bench_with_input(BenchmarkId::from_parameter(m), &m, |b, _| {
            b.iter(|| {
                repro_coarsen(&g, &h, &HashSet::new(), 0.5, 2.0, ImportanceMeasure::Degree)
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_repro);
criterion_main!(benches);
