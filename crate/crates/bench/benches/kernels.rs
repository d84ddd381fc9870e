use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use fastcaputo::caputo::{direct_caputo_series, fast_caputo_series};
use fastcaputo::linear::{manufactured_problem, solve_linear_with};
use fastcaputo::quadrature::{gauss_jacobi_power, gauss_legendre};
use fastcaputo::soe::build_soe;
use fastcaputo::SolveConfig;
use fastcaputo_bench::{kernel, sine_samples};

fn quadrature(c: &mut Criterion) {
    let mut g = c.benchmark_group("quadrature");
    for n in [16, 64] {
        g.bench_with_input(BenchmarkId::new("legendre", n), &n, |b, &n| {
            b.iter(|| gauss_legendre(black_box(n), 0.0, 1.0).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("jacobi", n), &n, |b, &n| {
            b.iter(|| gauss_jacobi_power(black_box(n), 0.5, 1.0).unwrap())
        });
    }
    g.finish();
}

fn soe(c: &mut Criterion) {
    let mut g = c.benchmark_group("soe");
    g.sample_size(10);
    g.bench_function("build alpha=0.5 eps=1e-6", |b| {
        b.iter(|| build_soe(1.5, black_box(1e-3), 1.0, 1e-6).unwrap())
    });
    let raw = build_soe(1.5, 1e-3, 1.0, 1e-6).unwrap();
    g.bench_function("reduce alpha=0.5 eps=1e-6", |b| b.iter(|| raw.reduce(black_box(1e-6))));
    g.finish();
}

fn caputo(c: &mut Criterion) {
    let mut g = c.benchmark_group("caputo series");
    g.sample_size(10);
    for n in [1usize << 10, 1 << 12, 1 << 14] {
        let dt = 1.0 / n as f64;
        let samples = sine_samples(n, dt);
        let k = kernel(0.5, dt, n, 1e-9).unwrap();
        g.bench_with_input(BenchmarkId::new("fast", n), &samples, |b, s| {
            b.iter(|| fast_caputo_series(k.clone(), s).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("direct", n), &samples, |b, s| {
            b.iter(|| direct_caputo_series(s, dt, 0.5).unwrap())
        });
    }
    g.finish();
}

fn linear(c: &mut Criterion) {
    let mut g = c.benchmark_group("linear solve");
    g.sample_size(10);
    let problem = manufactured_problem(0.5);
    for nt in [1usize << 10, 1 << 12] {
        let grid = problem.grid(30, nt).unwrap();
        for cfg in [SolveConfig::fast(1e-7), SolveConfig::direct()] {
            solve_linear_with(&problem, &grid, &cfg, &mut |_, _| {}).unwrap();
            g.bench_with_input(BenchmarkId::new(cfg.variant.as_str(), nt), &grid, |b, grid| {
                b.iter(|| solve_linear_with(&problem, grid, &cfg, &mut |_, _| {}).unwrap())
            });
        }
    }
    g.finish();
}

criterion_group!(benches, quadrature, soe, caputo, linear);
criterion_main!(benches);
