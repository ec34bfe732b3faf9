use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sfsod::heuristics::{
    default_ensemble, dfo_local_search, random_start_concentration, with_ensemble_bounds, HeuristicConfig,
};
use sfsod::solver::{solve, BoundMode, SolverConfig};
use sfsod::trimmed_loss;
use sfsod_bench::planted_problem;

fn objective(c: &mut Criterion) {
    let pb = planted_problem(100, 50, 5, 1);
    let beta = vec![0.1; pb.p()];
    c.bench_function("trimmed_loss n=100 p=50", |b| b.iter(|| trimmed_loss(black_box(&pb), black_box(&beta))));
}

fn heuristics(c: &mut Criterion) {
    let pb = planted_problem(100, 50, 5, 1);
    let cfg = HeuristicConfig {
        n_starts: 100,
        keep_best: 5,
        ..Default::default()
    };
    let mut g = c.benchmark_group("heuristics n=100 p=50");
    g.sample_size(10);
    g.bench_function("dfo_local_search", |b| b.iter(|| dfo_local_search(&pb, &vec![0.0; pb.p()], 500)));
    g.bench_function("random_start_concentration", |b| b.iter(|| random_start_concentration(&pb, &cfg)));
    g.bench_function("default_ensemble", |b| b.iter(|| default_ensemble(&pb, &cfg)));
    g.finish();
}

fn branch_and_bound(c: &mut Criterion) {
    let hc = HeuristicConfig {
        n_starts: 50,
        keep_best: 5,
        ..Default::default()
    };
    let mut g = c.benchmark_group("solve to optimality");
    g.sample_size(10);
    for &(n, p) in &[(20, 6), (30, 8)] {
        let pb = planted_problem(n, p, 3, 2);
        let set = default_ensemble(&pb, &hc);
        let bounded = with_ensemble_bounds(&pb, &set, &hc).expect("nonempty ensemble");
        for mode in [BoundMode::BigM, BoundMode::Sos] {
            let target = if mode == BoundMode::BigM { &bounded } else { &pb };
            let warm = set.warm_starts(target);
            let cfg = SolverConfig {
                bound_mode: mode,
                ..Default::default()
            };
            let id = BenchmarkId::new(format!("{mode:?}"), format!("n={n} p={p}"));
            g.bench_with_input(id, &warm, |b, w| b.iter(|| solve(target, &cfg, w).expect("solves")));
        }
    }
    g.finish();
}

criterion_group!(benches, objective, heuristics, branch_and_bound);
criterion_main!(benches);
