use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use otlimits::measures::sample_gaussian;
use otlimits::{grid_bound_statistic, limit_flow, GridSpace};
use otlimits_bench::{measure, plane, rng, signed, tree};

fn tree_statistic(c: &mut Criterion) {
    let mut group = c.benchmark_group("tree_z");
    for n in [1_000, 100_000] {
        let t = tree(n, 4);
        let u = signed(n, 5);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| b.iter(|| t.z_statistic(&u, 1.0)));
    }
    group.finish();
}

fn grid_bound(c: &mut Criterion) {
    let mut group = c.benchmark_group("grid_bound");
    for side in [64, 256] {
        let grid = GridSpace::new(2, side).unwrap();
        let u = signed(grid.len(), 6);
        group.bench_with_input(BenchmarkId::from_parameter(side), &side, |b, _| {
            b.iter(|| grid_bound_statistic(&grid, &u, 1.0).unwrap())
        });
    }
    group.finish();
}

fn exact_limit_draw(c: &mut Criterion) {
    let n = 100;
    let space = plane(n, 7);
    let r = measure(n, 8);
    let mut source = rng(9);
    c.bench_function("limit_flow_100", |b| {
        b.iter(|| {
            let g = sample_gaussian(&r, &mut source);
            limit_flow(&space, &g, 1.0).unwrap().value
        })
    });
}

criterion_group!(benches, tree_statistic, grid_bound, exact_limit_draw);
criterion_main!(benches);
