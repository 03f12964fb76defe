use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use obslab_core::blowup::{classify_point_oriented, BlowupOptions};
use obslab_core::free_boundary::extract;
use obslab_core::functionals::weiss_phi;
use obslab_core::solver::{solve_field, SolveOptions};
use obslab_core::{CoefficientField, Domain, Grid, Vec3};

fn field() -> CoefficientField {
    CoefficientField::radial_lipschitz(2, 0.3, 1.0).with_boundary(|x| 0.5 * x[1].max(0.0).powi(2))
}

fn grid(n: usize) -> Grid {
    Grid::new(Domain::centered_cube(2, 1.0).unwrap(), &[2 * n + 1, 2 * n + 1]).unwrap()
}

fn solve(c: &mut Criterion) {
    let cf = field();
    let mut group = c.benchmark_group("solve");
    group.sample_size(10);
    for n in [32, 64] {
        let g = grid(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &g, |b, g| {
            b.iter(|| solve_field(&cf, black_box(g), &SolveOptions::default()).unwrap())
        });
    }
    group.finish();
}

fn analysis(c: &mut Criterion) {
    let cf = field();
    let sol = solve_field(&cf, &grid(64), &SolveOptions::default()).unwrap();
    let fbs = extract(&sol).unwrap();
    let p = fbs.points.iter().min_by(|a, b| a.x.norm().total_cmp(&b.x.norm())).unwrap();

    c.bench_function("extract", |b| b.iter(|| extract(black_box(&sol)).unwrap()));
    c.bench_function("weiss_phi", |b| {
        b.iter(|| weiss_phi(sol.field(), &cf, black_box(&Vec3::zeros()), 0.25).unwrap())
    });
    let mut group = c.benchmark_group("classify");
    group.sample_size(10);
    group.bench_function("half-space point", |b| {
        b.iter(|| classify_point_oriented(sol.field(), &cf, &p.x, &p.normal, &BlowupOptions::default()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, solve, analysis);
criterion_main!(benches);
