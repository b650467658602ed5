use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use owlab::almostdiag::{ad_apply, canonical_ad_matrix, ADParams};
use owlab::dyadic::babc_raw;
use owlab::lpfilters::{build_lp_pair, convolution, FrequencyGrid};
use owlab::seqspace::{seq_norm, DyadicSequence, NormFamily, NormSource, PreparedNorms, SpaceParams};
use owlab::weights::{rho_lp, QuadRule};
use owlab::{DyadicCube, GridWindow, Quadrature, WeightModel};

fn power_weight() -> WeightModel {
    WeightModel::diagonal_power(1, 2.0, vec![vec![1.0 / 3.0], vec![0.7]], vec![0.3, -0.2]).unwrap()
}

fn kernel(c: &mut Criterion) {
    let q = DyadicCube::new(3, vec![5, -2]);
    let r = DyadicCube::new(-1, vec![7, 4]);
    c.bench_function("babc_raw", |b| b.iter(|| babc_raw(black_box(-4.0), -3.0, -3.0, black_box(&q), black_box(&r))));
}

fn cube_norms(c: &mut Criterion) {
    let v = power_weight();
    let q = DyadicCube::new(2, vec![1]);
    let e = [0.6, -0.8];
    let mut g = c.benchmark_group("rho_lp");
    for (name, quad) in [
        ("closed_form", Quadrature::default()),
        ("midpoint_64", Quadrature::default().sampled_only()),
        ("tanh_sinh", Quadrature::new(64, QuadRule::TanhSinh).unwrap().sampled_only()),
    ] {
        g.bench_function(name, |b| b.iter(|| rho_lp(&v, &q, 2.0, black_box(&e), &quad).unwrap()));
    }
    g.finish();
}

fn sequence_norms(c: &mut Criterion) {
    let fam = NormFamily::weighted(power_weight(), 2.0, Quadrature::default());
    let mut g = c.benchmark_group("seq_norm");
    for j1 in [4, 6, 8] {
        let w = Arc::new(GridWindow::unit(1, 0, j1).unwrap());
        let t = DyadicSequence::random(w.clone(), 2, 0xA9);
        let norms = PreparedNorms::new(&fam, w).unwrap();
        let besov = SpaceParams::besov(1, 0.5, 2.0, 1.5).unwrap();
        let tl = SpaceParams::tl(1, 0.5, 2.0, 1.5).unwrap();
        g.bench_with_input(BenchmarkId::new("besov_prepared", j1), &t, |b, t| b.iter(|| norms.seq_norm(t, &besov).unwrap()));
        g.bench_with_input(BenchmarkId::new("tl_prepared", j1), &t, |b, t| b.iter(|| norms.seq_norm(t, &tl).unwrap()));
        g.bench_with_input(BenchmarkId::new("besov_family", j1), &t, |b, t| {
            b.iter(|| seq_norm(t, &besov, NormSource::Family(&fam)).unwrap())
        });
    }
    g.finish();
}

fn almost_diagonal(c: &mut Criterion) {
    let mut g = c.benchmark_group("ad_apply");
    for j1 in [4, 6, 8] {
        let w = Arc::new(GridWindow::unit(1, 0, j1).unwrap());
        let m = canonical_ad_matrix(ADParams::new(4.0, 3.0, 3.0).unwrap(), w.clone());
        let t = DyadicSequence::random(w, 2, 0xA9);
        g.bench_with_input(BenchmarkId::from_parameter(j1), &t, |b, t| b.iter(|| ad_apply(&m, t).unwrap()));
    }
    g.finish();
}

fn filters(c: &mut Criterion) {
    let pair = build_lp_pair(5.0 / 3.0, 2.0, FrequencyGrid::default()).unwrap();
    c.bench_function("lp_convolution_2_3", |b| b.iter(|| convolution(&pair, 2, 3).unwrap()));
}

criterion_group!(benches, kernel, cube_norms, sequence_norms, almost_diagonal, filters);
criterion_main!(benches);
