//! Compares the rayon-backed ensemble and study drivers against the
//! sequential reference path on identical workloads. Outputs are
//! bit-identical by the seeding contract; only throughput differs.
//!
//! Run with the default features for the parallel numbers, or with
//! `--no-default-features` to measure the pure sequential build:
//!
//! ```text
//! cargo bench -p warpcell
//! cargo bench -p warpcell --no-default-features
//! ```

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use warpcell::exact1d::Setup1d;
use warpcell::fem::{build_mesh, sample_coefficients, solve_corrector};
use warpcell::homogenize::estimate_a_star;
use warpcell::mcstats::{run_ensemble, run_ensemble_serial, EnsembleOptions};
use warpcell::model::{
    DiffeoLaw, PeriodicMatrixField, PeriodicScalarField, ShapeFn, SourceTerm, TensorDiffeo, XDist,
};

fn setup() -> Setup1d {
    Setup1d::new(
        DiffeoLaw::new(0.7, XDist::UniformSym, ShapeFn::Sine).unwrap(),
        PeriodicScalarField::piecewise(vec![0.0, 0.5], vec![1.0, 4.0]).unwrap(),
        SourceTerm::constant(1.0),
    )
    .unwrap()
}

fn bench_ensemble(c: &mut Criterion) {
    let s = setup();
    let opts = EnsembleOptions::with_grid(vec![0.25, 0.5, 0.75]);
    let mut group = c.benchmark_group("ensemble_m64_eps_1_50");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("dispatch", "default"), |b| {
        b.iter(|| run_ensemble(&s, 1.0 / 50.0, 64, &opts, 42).unwrap())
    });
    group.bench_function(BenchmarkId::new("serial", "reference"), |b| {
        b.iter(|| run_ensemble_serial(&s, 1.0 / 50.0, 64, &opts, 42).unwrap())
    });
    group.finish();
}

fn bench_corrector(c: &mut Criterion) {
    let law = DiffeoLaw::new(0.7, XDist::UniformSym, ShapeFn::Sine).unwrap();
    let diffeo = TensorDiffeo::sample(&law, 2, 0..4, 7).unwrap();
    let a_per = PeriodicMatrixField::laminate(
        0,
        PeriodicScalarField::piecewise(vec![0.0, 0.5], vec![1.0, 4.0]).unwrap(),
    )
    .unwrap();
    let mesh = build_mesh(2, 4, 8).unwrap();
    let mut group = c.benchmark_group("corrector_n4_r8");
    group.sample_size(20);
    group.bench_function("sample_and_solve", |b| {
        b.iter(|| {
            let coeff = sample_coefficients(&mesh, &diffeo, &a_per).unwrap();
            solve_corrector(&coeff, 0, 1e-10).unwrap()
        })
    });
    group.bench_function("estimate_full", |b| {
        b.iter(|| estimate_a_star(&mesh, &diffeo, &a_per, 1e-10).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_ensemble, bench_corrector);
criterion_main!(benches);
