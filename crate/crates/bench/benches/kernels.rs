//! Hot-path benchmarks: orbit enumeration and continuation, trace sums,
//! root finding, Galerkin column assembly and the mollified quadratures.

use criterion::{criterion_group, criterion_main, Criterion};
use num_complex::Complex64;
use std::hint::black_box;
use zetalab_core::determinant::coefficients_from_traces;
use zetalab_core::dynamics::{IntegerMatrix, MapSpec, TrigPolynomial, WeightSpec};
use zetalab_core::grid::QuadratureGrid;
use zetalab_core::mollifier::{mollified_trace, MollifierSpec};
use zetalab_core::orbits::{continue_orbits, enumerate_linear, OrbitSource};
use zetalab_core::roots::{all_roots, RootFindOptions};
use zetalab_core::spectral::{build_galerkin, eigen_solve};
use zetalab_core::traces::trace_table;

fn cat_matrix() -> IntegerMatrix {
    IntegerMatrix::new(vec![vec![2, 1], vec![1, 1]]).unwrap()
}

fn perturbed_cat(eps: f64) -> MapSpec {
    MapSpec::new(
        cat_matrix(),
        eps,
        vec![
            TrigPolynomial::real_sine(1.0, vec![0, 1]),
            TrigPolynomial::zero(),
        ],
        4.0,
    )
    .unwrap()
}

fn bench_orbits(c: &mut Criterion) {
    c.bench_function("enumerate_linear_n10", |b| {
        let a = cat_matrix();
        b.iter(|| enumerate_linear(black_box(&a), 10).unwrap())
    });
    c.bench_function("continue_orbits_n4_eps1e-2", |b| {
        let map = perturbed_cat(0.01);
        let seeds = enumerate_linear(&cat_matrix(), 4).unwrap();
        b.iter(|| continue_orbits(black_box(&map), 4, &seeds, 1e-11).unwrap())
    });
}

fn bench_traces(c: &mut Criterion) {
    c.bench_function("trace_table_n8", |b| {
        let map = MapSpec::linear(cat_matrix()).unwrap();
        let weight = WeightSpec::trig(
            TrigPolynomial::constant_one().add(&TrigPolynomial::real_cosine(0.1, vec![1, 0])),
        );
        b.iter(|| {
            let mut src = OrbitSource::new(&map, 1e-11);
            trace_table(black_box(&map), &weight, 8, &mut src).unwrap()
        })
    });
}

fn bench_series_and_roots(c: &mut Criterion) {
    c.bench_function("series_and_roots_n12", |b| {
        let entries: Vec<Complex64> = (1..=12)
            .map(|n| Complex64::new(1.0 + 0.3f64.powi(n), 0.0))
            .collect();
        let table = zetalab_core::traces::TraceTable::new("m".into(), "w".into(), entries);
        b.iter(|| {
            let series = coefficients_from_traces(black_box(&table), 12).unwrap();
            all_roots(&series.coefficients, &RootFindOptions::default()).unwrap()
        })
    });
}

fn bench_galerkin(c: &mut Criterion) {
    c.bench_function("galerkin_build_K8_m64", |b| {
        let map = perturbed_cat(0.02);
        let weight = WeightSpec::one();
        b.iter(|| build_galerkin(black_box(&map), &weight, 8, 64).unwrap())
    });
    c.bench_function("eigen_solve_K8_structural", |b| {
        let map = MapSpec::linear(cat_matrix()).unwrap();
        let op = build_galerkin(&map, &WeightSpec::one(), 8, 64).unwrap();
        b.iter(|| eigen_solve(black_box(&op), 16).unwrap())
    });
}

fn bench_mollifier(c: &mut Criterion) {
    c.bench_function("mollified_trace_m256", |b| {
        let map = MapSpec::linear(cat_matrix()).unwrap();
        let weight = WeightSpec::one();
        let moll = MollifierSpec::truncated_gaussian(0.05).unwrap();
        let grid = QuadratureGrid::new(256);
        b.iter(|| mollified_trace(black_box(&map), &weight, 1, &moll, &grid).unwrap())
    });
}

criterion_group!(
    benches,
    bench_orbits,
    bench_traces,
    bench_series_and_roots,
    bench_galerkin,
    bench_mollifier
);
criterion_main!(benches);
