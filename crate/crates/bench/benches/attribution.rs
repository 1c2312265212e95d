use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use survint::game::{evaluate_all_coalitions, TableGame, DEFAULT_MEMORY_BUDGET};
use survint::shapiq::{approximate, exact_ksii, moebius_transform, ApproxMethod, ApproximatorConfig};
use survint::PredictionTarget;
use survint_bench::{instance, setup, table};

fn exact(c: &mut Criterion) {
    let mut g = c.benchmark_group("exact");
    for p in [6, 8, 10] {
        let t = table(p, 41);
        g.bench_with_input(BenchmarkId::new("moebius", p), &t, |b, t| b.iter(|| moebius_transform(black_box(t))));
        g.bench_with_input(BenchmarkId::new("k-sii-3", p), &t, |b, t| b.iter(|| exact_ksii(black_box(t), 3).unwrap()));
    }
    g.finish();
}

fn value_table(c: &mut Criterion) {
    let mut g = c.benchmark_group("value-table");
    g.sample_size(10);
    for target in PredictionTarget::ALL {
        let s = setup(8, target, 100, 41);
        let game = s.game(&instance(8)).unwrap();
        g.bench_function(target.as_str(), |b| {
            b.iter(|| evaluate_all_coalitions(black_box(&game), DEFAULT_MEMORY_BUDGET).unwrap())
        });
    }
    g.finish();
}

fn approximators(c: &mut Criterion) {
    let game = TableGame::new(Arc::new(table(10, 41)));
    let mut g = c.benchmark_group("approx-p10-k3");
    for method in ApproxMethod::ALL {
        for budget in [128, 512] {
            let cfg = ApproximatorConfig::new(method, budget, 5);
            g.bench_with_input(BenchmarkId::new(method.as_str(), budget), &cfg, |b, cfg| {
                b.iter(|| approximate(&game, 3, black_box(cfg)).unwrap())
            });
        }
    }
    g.finish();
}

criterion_group!(benches, exact, value_table, approximators);
criterion_main!(benches);
