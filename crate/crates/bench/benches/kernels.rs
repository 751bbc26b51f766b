use ballcert::{
    entry, estimate_constant, integrate_from_zero, solve_radius, two_step_newton, LAverage, LipschitzKind,
    QuadratureConfig, RadiusCondition, StopRule,
};
use criterion::{black_box, criterion_group, criterion_main, Criterion};

fn radius(c: &mut Criterion) {
    let closed = LAverage::rational(1.0, 1.0).unwrap();
    let holder = LAverage::holder(1.0, 0.5).unwrap();
    c.bench_function("solve_radius/rational_T31", |b| {
        b.iter(|| solve_radius(RadiusCondition::T31, black_box(&closed), 1e-12).unwrap())
    });
    c.bench_function("solve_radius/holder_T52", |b| {
        b.iter(|| solve_radius(RadiusCondition::T52, black_box(&holder), 1e-12).unwrap())
    });
}

fn iteration(c: &mut Criterion) {
    let stop = StopRule::default();
    for name in ["sys2", "wang-osc"] {
        let e = entry(name).unwrap();
        c.bench_function(&format!("two_step_newton/{name}"), |b| {
            b.iter(|| two_step_newton(&e.problem, black_box(&e.default_x0), &stop).unwrap())
        });
    }
}

fn quadrature(c: &mut Criterion) {
    let cfg = QuadratureConfig::default();
    c.bench_function("integrate_from_zero/sqrt", |b| {
        b.iter(|| integrate_from_zero(|u: f64| u.sqrt(), black_box(0.7), 1, &cfg).unwrap())
    });
}

fn estimate(c: &mut Criterion) {
    let p = entry("sys2").unwrap().problem;
    c.bench_function("estimate_constant/sys2_radius_500", |b| {
        b.iter(|| estimate_constant(&p, LipschitzKind::Radius, 0.5, black_box(500), 42).unwrap())
    });
}

criterion_group!(benches, radius, iteration, quadrature, estimate);
criterion_main!(benches);
