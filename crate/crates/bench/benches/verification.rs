use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::DVector;
use orbit_averager_bench::s1_worked;
use orbit_averager_core::{find_fixed_point, return_map, SectionSpec, VerifyOptions};
use std::hint::black_box;

fn bench_return_map(c: &mut Criterion) {
    let (s, p) = s1_worked();
    let sec = SectionSpec::for_scenario(&s);
    let opts = VerifyOptions::default();
    let y = DVector::from_row_slice(&[0.0, 1.0]);
    c.bench_function("return_map/s1-eps-1e-2", |b| {
        b.iter(|| {
            return_map(
                black_box(&s),
                black_box(&p),
                1e-2,
                black_box(&sec),
                black_box(&y),
                black_box(&opts),
            )
            .unwrap()
        })
    });
}

fn bench_find_fixed_point(c: &mut Criterion) {
    let (s, p) = s1_worked();
    let sec = SectionSpec::for_scenario(&s);
    let opts = VerifyOptions::default();
    let guess = DVector::from_row_slice(&[0.0, 1.0]);
    c.bench_function("find_fixed_point/s1-eps-1e-2", |b| {
        b.iter(|| {
            find_fixed_point(
                black_box(&s),
                black_box(&p),
                1e-2,
                black_box(&sec),
                black_box(&guess),
                1e-8,
                black_box(&opts),
            )
            .unwrap()
        })
    });
}

criterion_group!(benches, bench_return_map, bench_find_fixed_point);
criterion_main!(benches);
