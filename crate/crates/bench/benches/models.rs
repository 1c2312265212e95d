use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use survint::metrics::{concordance_index, integrated_brier};
use survint::simulate::{build_scenario, simulate_event_time, simulate_event_time_numeric, ScenarioId};
use survint::survmodel::fit_coxph;
use survint::{build_time_grid, GridMode};
use survint_bench::dataset;

fn cox(c: &mut Criterion) {
    let data = dataset(800);
    c.bench_function("coxph-fit-800", |b| b.iter(|| fit_coxph(black_box(&data)).unwrap()));

    let model = fit_coxph(&data).unwrap();
    let risk: Vec<f64> = data.rows().map(|r| model.linear_predictor(r).unwrap()).collect();
    c.bench_function("cindex-800", |b| b.iter(|| concordance_index(black_box(&risk), &data).unwrap()));

    let max_t = data.times().iter().copied().fold(0.0, f64::max);
    let grid = build_time_grid(0.999 * max_t, 41, GridMode::Even).unwrap();
    let surv: Vec<Vec<f64>> = data
        .rows()
        .map(|r| grid.points().iter().map(|&t| model.survival(r, t).unwrap()).collect())
        .collect();
    c.bench_function("ibs-800", |b| b.iter(|| integrated_brier(black_box(&surv), &data, &grid).unwrap()));
}

fn event_times(c: &mut Criterion) {
    let x = [0.3, -1.1, 0.8];
    for s in [1u8, 2] {
        let model = build_scenario(ScenarioId::Numbered(s)).unwrap();
        c.bench_function(&format!("event-time-scenario{s}"), |b| {
            b.iter(|| simulate_event_time(&model, black_box(&x), 0.37).unwrap())
        });
    }
    let model = build_scenario(ScenarioId::Numbered(2)).unwrap();
    c.bench_function("event-time-root-finder", |b| {
        b.iter(|| simulate_event_time_numeric(&model, black_box(&x), 0.37).unwrap())
    });
}

criterion_group!(benches, cox, event_times);
criterion_main!(benches);
