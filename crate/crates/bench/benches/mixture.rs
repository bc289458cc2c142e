use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tpkde::density::{tpkde_build, Density};
use tpkde::lattice::{ClosureConfig, ClosureEngine};
use tpkde_bench::sample;

fn evaluate(c: &mut Criterion) {
    let mut group = c.benchmark_group("tpkde_log_density_d2");
    for n in [10, 40] {
        let x = sample(2, n);
        let mix = tpkde_build(&x, 0.3, ClosureEngine::Grid, &ClosureConfig::default()).unwrap();
        let points = sample(2, 64);
        group.bench_with_input(BenchmarkId::new("m", mix.len()), &mix, |b, mix| {
            b.iter(|| points.iter().map(|p| mix.log_density(p.coords())).sum::<f64>())
        });
    }
    group.finish();
}

criterion_group!(benches, evaluate);
criterion_main!(benches);
