//! Compares the rayon-parallel defect-grid scan against the sequential
//! fallback on the τ̃ connection problem.

use criterion::{criterion_group, criterion_main, Criterion};
use num_complex::Complex64;
use prandtl_lab::shear_layer::connection_defect;
use prandtl_lab::parallel;

fn scan_points(n: usize) -> Vec<Complex64> {
    let mut pts = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let re = -2.0 + 4.0 * i as f64 / (n - 1) as f64;
            let im = -2.5 + 2.0 * j as f64 / (n - 1) as f64;
            pts.push(Complex64::new(re, im));
        }
    }
    pts
}

fn bench_defect_scan(c: &mut Criterion) {
    let pts = scan_points(8);
    let eval = |t: &Complex64| {
        connection_defect(*t, 0.0, 8.0).map(|d| d.norm()).unwrap_or(f64::INFINITY)
    };
    let mut group = c.benchmark_group("defect_scan_8x8");
    group.sample_size(10);
    group.bench_function("parallel", |b| b.iter(|| parallel::map(&pts, eval)));
    group.bench_function("sequential", |b| b.iter(|| parallel::map_seq(&pts, eval)));
    group.finish();
}

criterion_group!(benches, bench_defect_scan);
criterion_main!(benches);
