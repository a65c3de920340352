use std::collections::BTreeMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use dioph_core::detmethod::{build_matrix, det_and_rank};
use dioph_core::funcdsl::{parse, GraphFibre};
use dioph_core::mildness::{interior_grid, verify_cert, MildCert, Order};
use dioph_core::multiidx::enumerate_delta;
use dioph_core::rationals::{axis_values, count_graph_points};
use dioph_core::{PointCloud, QPoint, Rational};

fn farey(c: &mut Criterion) {
    c.bench_function("axis_values H=500", |b| {
        b.iter(|| axis_values(black_box(500), &Rational::new(), &Rational::from(1)).len())
    });
}

fn graph_count(c: &mut Criterion) {
    let fibre = GraphFibre::new(parse("2^x1").unwrap(), 1, BTreeMap::new()).unwrap();
    let bx = [(Rational::new(), Rational::from(1)), (Rational::new(), Rational::from(100))];
    c.bench_function("graph 2^x H=100", |b| {
        b.iter(|| count_graph_points(|lead: &[(i64, i64)]| fibre.fibre_pairs(lead, 100), 2, 100, &bx).unwrap().0)
    });
}

fn determinant(c: &mut Criterion) {
    let d = 3;
    let big_d = enumerate_delta(2, d).len();
    let points = (0..big_d as i64)
        .map(|k| QPoint::new(vec![Rational::from((k + 1, 7)), Rational::from((k * k + 2, 11))]))
        .collect();
    let cloud = PointCloud { points, height_bound: 200 };
    let m = build_matrix(&cloud, d).unwrap();
    c.bench_function("det_and_rank n=2 d=3", |b| b.iter(|| det_and_rank(black_box(&m)).rank));
}

fn mild(c: &mut Criterion) {
    let f = parse("1/(2 - x1)").unwrap();
    let cert = MildCert::mild(1, 0, Order::Infinite, 1);
    let grid = interior_grid(1, 100, &Rational::from(1));
    let mut g = c.benchmark_group("mildness");
    g.sample_size(10);
    g.bench_function("verify 1/(2-x) order 8, 100 points", |b| {
        b.iter(|| verify_cert(&f, &cert, &grid, 8).unwrap().passed)
    });
    g.finish();
}

criterion_group!(benches, farey, graph_count, determinant, mild);
criterion_main!(benches);
