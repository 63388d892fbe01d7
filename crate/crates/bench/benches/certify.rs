use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::DVector;

use qgrad_core::deformation::certify_quasigradient;
use qgrad_core::levelset::{psi_profile, LevelOptions};
use qgrad_core::potential::catalog;
use qgrad_core::DeformedEnergy;

fn bench_certify(c: &mut Criterion) {
    let spec = catalog::quadratic_diag(&[1.0, 1.0]).unwrap();
    let de = DeformedEnergy::new(spec, 1.0, 1.0 / 6.0).unwrap();
    c.bench_function("certificate, 1e4 phase samples", |b| {
        b.iter(|| certify_quasigradient(black_box(&de), 1.0, 10_000, 0).unwrap())
    });

    let saddle = catalog::saddle();
    let opts = LevelOptions::default();
    c.bench_function("saddle level-set profile, 13 levels", |b| {
        b.iter(|| psi_profile(black_box(&saddle), &DVector::zeros(2), 1e-2, 1e-8, 2, &opts).unwrap())
    });
}

criterion_group!(benches, bench_certify);
criterion_main!(benches);
