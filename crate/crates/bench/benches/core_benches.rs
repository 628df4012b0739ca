use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use diffk_core::contraction::{curve_problem, picard_solve};
use diffk_core::diffeo::Diffeo;
use diffk_core::expr::ScalarExpr;
use diffk_core::fields::{BoundaryVanishingField, LieAlgebraCurve, Weight};
use diffk_core::geometry::ConvexBody;
use diffk_core::jets::{taylor_extract, JetPoly};

fn logistic_curve(c: f64) -> LieAlgebraCurve {
    let body = Arc::new(ConvexBody::interval(0.0, 1.0).unwrap());
    let field = Arc::new(
        BoundaryVanishingField::new(
            body,
            vec![ScalarExpr::constant(c)],
            Weight::SlackProduct,
            (0.0, 1.0),
        )
        .unwrap(),
    );
    LieAlgebraCurve::new(field).unwrap()
}

fn bench_picard(c: &mut Criterion) {
    let curve = logistic_curve(0.3);
    let mut group = c.benchmark_group("picard_solve");
    for n in [256usize, 1024, 4096] {
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            let problem = curve_problem(&curve, &[0.5]).unwrap();
            b.iter(|| picard_solve(&problem, n, 1e-10, 400).unwrap());
        });
    }
    group.finish();
}

fn random_jet(seed: u64, n: usize, k: usize) -> JetPoly<f64> {
    // deterministic pseudo-random coefficients, identity-dominant
    let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state as f64 / u64::MAX as f64) - 0.5
    };
    let mut p = JetPoly::<f64>::identity(n, k).unwrap();
    for i in 0..n {
        for j in 0..n {
            let mut alpha = vec![0usize; n];
            alpha[j] = 2;
            p.set_coeff(i, &alpha, 0.2 * next()).unwrap();
            if n > 1 {
                let mut mixed = vec![1usize; n.min(2)];
                mixed.resize(n, 0);
                p.set_coeff(i, &mixed, 0.1 * next()).unwrap();
            }
        }
    }
    p
}

fn bench_jets(c: &mut Criterion) {
    let mut group = c.benchmark_group("jets");
    for (n, k) in [(2usize, 3usize), (3, 4)] {
        let p = random_jet(7, n, k);
        let q = random_jet(11, n, k);
        group.bench_function(BenchmarkId::new("compose", format!("n{n}_k{k}")), |b| {
            b.iter(|| p.compose(&q).unwrap());
        });
        group.bench_function(BenchmarkId::new("invert", format!("n{n}_k{k}")), |b| {
            b.iter(|| p.invert().unwrap());
        });
    }
    group.finish();
}

fn bench_diffeo(c: &mut Criterion) {
    let body = Arc::new(ConvexBody::interval(0.0, 1.0).unwrap());
    let field = Arc::new(
        BoundaryVanishingField::new(
            body,
            vec![ScalarExpr::constant(0.2)],
            Weight::SlackProduct,
            (0.0, 1.0),
        )
        .unwrap(),
    );
    let phi = Diffeo::from_field(field, 0.0).unwrap();
    c.bench_function("invert_at", |b| {
        b.iter(|| phi.invert_at(&[0.55], 1e-10).unwrap());
    });
    c.bench_function("taylor_extract_k2", |b| {
        b.iter(|| taylor_extract(&phi, &[0.0], 2, 1e-2).unwrap());
    });
}

criterion_group!(benches, bench_picard, bench_jets, bench_diffeo);
criterion_main!(benches);
