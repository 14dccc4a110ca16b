//! Benchmarks for the hot paths: likelihood, score, and Fisher
//! evaluation on a censored survival dataset, a full model fit, and the
//! simultaneous-band multiplier.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mlt_bench::{survival_data, survival_spec};
use mlt_core::inference::confidence_band_with_draws;
use mlt_core::likelihood::{total_fisher, total_loglik, total_score};
use mlt_core::models::{feasible_init, fit};
use mlt_core::OptimizerConfig;
use std::hint::black_box;

fn bench_evaluations(c: &mut Criterion) {
    let mut group = c.benchmark_group("evaluate");
    for n in [200_usize, 1000] {
        let data = survival_data(n);
        let model = survival_spec().resolve(&data).unwrap().build().unwrap();
        let theta = feasible_init(&model, &data).unwrap();
        group.bench_with_input(BenchmarkId::new("loglik", n), &n, |b, _| {
            b.iter(|| total_loglik(black_box(&model), black_box(&theta), black_box(&data)))
        });
        group.bench_with_input(BenchmarkId::new("score", n), &n, |b, _| {
            b.iter(|| total_score(black_box(&model), black_box(&theta), black_box(&data)))
        });
        group.bench_with_input(BenchmarkId::new("fisher", n), &n, |b, _| {
            b.iter(|| total_fisher(black_box(&model), black_box(&theta), black_box(&data)))
        });
    }
    group.finish();
}

fn bench_fit(c: &mut Criterion) {
    let data = survival_data(300);
    let spec = survival_spec();
    let config = OptimizerConfig::default();
    c.bench_function("fit/cox_n300", |b| {
        b.iter(|| fit(black_box(&spec), black_box(&data), &config).unwrap())
    });
}

fn bench_band(c: &mut Criterion) {
    let data = survival_data(300);
    let spec = survival_spec();
    let config = OptimizerConfig::default();
    let result = fit(&spec, &data, &config).unwrap();
    let lo = 0.05;
    let hi = 3.0;
    let rows: Vec<_> = (0..40)
        .map(|i| {
            let y = lo + (hi - lo) * i as f64 / 39.0;
            result.model.basis.eval(y, &[0.0], true).unwrap()
        })
        .collect();
    c.bench_function("band/grid40_draws20000", |b| {
        b.iter(|| confidence_band_with_draws(black_box(&result), &rows, 0.95, 1, 20_000).unwrap())
    });
}

criterion_group!(benches, bench_evaluations, bench_fit, bench_band);
criterion_main!(benches);
