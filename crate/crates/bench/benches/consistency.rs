use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use koopman_core::consistency::{consistency_index, projection_difference_sprad, DEFAULT_PROJECTION_GUARD};
use koopman_core::observables::cubic_example_dictionary;
use koopman_core::{alpha_sweep, example1_dataset, log_grid, DataMatrix, EdmdModel, FitOptions};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

fn instance(n: usize, nd: usize) -> (DataMatrix, DataMatrix) {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let mut g = || DMatrix::from_fn(n, nd, |_, _| rng.sample(StandardNormal));
    (DataMatrix::new(g()), DataMatrix::new(g()))
}

fn index_paths(c: &mut Criterion) {
    let mut group = c.benchmark_group("index");
    for n in [100, 400, 1000] {
        let (dx, dy) = instance(n, 8);
        group.bench_with_input(BenchmarkId::new("principal_angles", n), &n, |b, _| {
            b.iter(|| consistency_index(black_box(&dx), black_box(&dy), FitOptions::default()).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("projection_difference", n), &n, |b, _| {
            b.iter(|| {
                projection_difference_sprad(black_box(&dx), black_box(&dy), DEFAULT_PROJECTION_GUARD, FitOptions::default())
                    .unwrap()
            })
        });
    }
    group.finish();
}

fn fit(c: &mut Criterion) {
    let (dx, dy) = instance(10_000, 20);
    c.bench_function("fit_10000x20", |b| {
        b.iter(|| EdmdModel::fit(dx.clone(), dy.clone(), FitOptions::default()).unwrap())
    });
}

fn sweep(c: &mut Criterion) {
    let data = example1_dataset(0);
    let dict = cubic_example_dictionary();
    let alphas = log_grid(0.01, 100.0, 100).unwrap();
    c.bench_function("reference_sweep_100", |b| {
        b.iter(|| alpha_sweep(&dict, &data, &alphas, FitOptions::default()).unwrap())
    });
}

criterion_group!(benches, index_paths, fit, sweep);
criterion_main!(benches);
