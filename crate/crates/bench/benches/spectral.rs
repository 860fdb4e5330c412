use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use halfline::darboux::remove_bound_state;
use halfline::fdoracle::{oracle_negative_spectrum, OracleOptions};
use halfline::io::load_preset;
use halfline::matcore::{cplx, moore_penrose, CMat};
use halfline::spectral::{find_bound_states, jost_matrix_on_axis};
use halfline::SpectralOptions;

fn spectral(c: &mut Criterion) {
    let (v, bc) = load_preset("coupled_2x2_well").unwrap();
    let opts = SpectralOptions::default();
    let mut group = c.benchmark_group("coupled_2x2_well");
    group.sample_size(10);
    group.bench_function("jost_matrix", |b| b.iter(|| jost_matrix_on_axis(&v, &bc, black_box(1.0)).unwrap()));
    group.bench_function("find_bound_states", |b| b.iter(|| find_bound_states(&v, &bc, &opts).unwrap()));
    let spec = find_bound_states(&v, &bc, &opts).unwrap();
    group.bench_function("remove_bound_state", |b| {
        b.iter(|| remove_bound_state(&v, &bc, &spec.states, black_box(0)).unwrap())
    });
    group.bench_function("fd_oracle", |b| {
        b.iter(|| oracle_negative_spectrum(&v, &bc, 12.0, 0.01, &OracleOptions::default()).unwrap())
    });
    group.finish();
}

fn pseudo_inverse(c: &mut Criterion) {
    let m = CMat::from_fn(4, 4, |i, j| cplx(((i + 1) * (j + 2)) as f64, (i as f64) - (j as f64)));
    c.bench_function("moore_penrose_4x4_rank2", |b| b.iter(|| moore_penrose(black_box(&m), None).unwrap()));
}

criterion_group!(benches, spectral, pseudo_inverse);
criterion_main!(benches);
