use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use mechpoly_core::bic::{build_bic_polytope, enumerate_vertices, sample_bic};
use mechpoly_core::catalog::{self, mp2, random_separable_game, screen1, GapFamily, RandomGameSpec};
use mechpoly_core::solver::{maxmin, minmax, MaxminParams, MinmaxMode, MinmaxParams};
use mechpoly_core::{solve_lp, FiniteGame, LpProblem};

fn random_two_principal(seed: u64) -> FiniteGame {
    let spec = RandomGameSpec::default()
        .with_principals(2..=2)
        .with_agents(2..=2)
        .with_types(2..=2)
        .with_actions(2..=2);
    random_separable_game(&mut catalog::rng(seed), &spec)
}

fn lp(c: &mut Criterion) {
    let p: LpProblem =
        serde_json::from_str(include_str!("../../core/tests/data/ill_conditioned_saddle_lp.json"))
            .unwrap();
    c.bench_function("lp/saddle", |b| b.iter(|| solve_lp(black_box(&p)).unwrap()));
    let g = random_two_principal(7);
    let poly = build_bic_polytope(&g, 0);
    c.bench_function("lp/sample_bic", |b| b.iter(|| sample_bic(black_box(&poly), 3).unwrap()));
}

fn vertices(c: &mut Criterion) {
    let screen = build_bic_polytope(&screen1(), 0);
    c.bench_function("vertices/screen1", |b| {
        b.iter(|| enumerate_vertices(black_box(&screen), 12).unwrap())
    });
    let g = random_two_principal(11);
    let poly = build_bic_polytope(&g, 0);
    c.bench_function("vertices/random_2x2", |b| {
        b.iter(|| enumerate_vertices(black_box(&poly), 12).unwrap())
    });
}

fn values(c: &mut Criterion) {
    let g = mp2();
    let params = MinmaxParams::default();
    c.bench_function("minmax/exact2_mp2", |b| {
        b.iter(|| minmax(black_box(&g), 0, MinmaxMode::Exact2, &params).unwrap())
    });
    c.bench_function("maxmin/mp2", |b| {
        b.iter(|| maxmin(black_box(&g), 0, &MaxminParams::default()).unwrap())
    });
    let g3 = GapFamily::gap3().sample(&mut catalog::rng(5));
    let grid = MinmaxParams { delta: 0.1, ..MinmaxParams::default() };
    let mut group = c.benchmark_group("minmax");
    group.sample_size(10);
    group.bench_function("grid_gap3", |b| {
        b.iter(|| minmax(black_box(&g3), 0, MinmaxMode::Grid, &grid).unwrap())
    });
    group.finish();
}

criterion_group!(benches, lp, vertices, values);
criterion_main!(benches);
