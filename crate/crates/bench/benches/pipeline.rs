use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use crystal_walk::montecarlo::simulate;
use crystal_walk::{
    analyze, builtin, modified_harmonic_realization, n_step, stationary_measure, Builtin, KernelChoice,
    LatticeState, VertexId, WalkConfig,
};
use std::hint::black_box;

fn bench_analyze(c: &mut Criterion) {
    let mut group = c.benchmark_group("analyze");
    for b in [Builtin::Hexagonal, Builtin::Dice] {
        let (l, k) = builtin(b).unwrap();
        group.bench_function(b.to_string(), |bench| bench.iter(|| analyze("bench", black_box(&l), &k).unwrap()));
    }
    group.finish();
}

fn bench_n_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("n_step");
    let (l, k) = builtin(Builtin::Dice).unwrap();
    let start = LatticeState::origin(VertexId(0), 2);
    for n in [8, 12, 20] {
        group.bench_with_input(BenchmarkId::new("dice", n), &n, |bench, &n| {
            bench.iter(|| n_step(&l, &k, &start, n).unwrap())
        });
    }
    group.finish();
}

fn bench_simulate(c: &mut Criterion) {
    let (l, k) = builtin(Builtin::Dice).unwrap();
    let m = stationary_measure(l.graph(), &k).unwrap();
    let r = modified_harmonic_realization(&l, &k, &m, VertexId(0)).unwrap();
    let mut cfg = WalkConfig::new(1_000, 1_000, 7, KernelChoice::Original);
    cfg.time_grid = vec![0.5, 1.0];
    c.bench_function("simulate/dice 1e3 x 1e3", |bench| bench.iter(|| simulate(&l, &k, &r, black_box(&cfg)).unwrap()));
}

criterion_group!(benches, bench_analyze, bench_n_step, bench_simulate);
criterion_main!(benches);
