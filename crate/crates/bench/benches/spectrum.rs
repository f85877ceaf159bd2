use std::f64::consts::PI;

use criterion::{black_box, criterion_group, criterion_main, Criterion};

use ringchain_core::oracle::oracle_value;
use ringchain_core::scanner::default_kappa_max;
use ringchain_core::{
    beta_coefficients, eval_full_condition, scan_negative, scan_positive, ChainParams, ScanOptions,
};

fn scans(c: &mut Criterion) {
    let p = ChainParams::new(PI, PI, 1.0).unwrap();
    c.bench_function("scan_positive k<20", |b| {
        b.iter(|| scan_positive(black_box(&p), 20.0, ScanOptions::default()).unwrap())
    });
    let d4 = ChainParams::new(8.0, 0.0, 0.5).unwrap();
    c.bench_function("scan_negative degree4", |b| {
        b.iter(|| scan_negative(black_box(&d4), default_kappa_max(&d4)).unwrap())
    });
}

fn pointwise(c: &mut Criterion) {
    let p = ChainParams::new(1.3, 2.1, 0.8).unwrap();
    c.bench_function("closed form", |b| {
        b.iter(|| eval_full_condition(black_box(&p), black_box(7.3), black_box(0.4)).unwrap())
    });
    c.bench_function("oracle determinant", |b| {
        b.iter(|| oracle_value(black_box(&p), black_box(7.3), black_box(0.4)))
    });
    let q = ChainParams::new(PI / 5.0, PI / 7.0, 1.0).unwrap();
    c.bench_function("beta coefficients", |b| {
        b.iter(|| beta_coefficients(black_box(&q), 1, black_box(49)).unwrap())
    });
}

criterion_group!(benches, scans, pointwise);
criterion_main!(benches);
