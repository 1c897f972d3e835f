//! DES solver benchmark on the shipped 2-vs-2 model.

use criterion::{criterion_group, criterion_main, Criterion};
use mslsim_core::des::{compose, model::EXAMPLE_MODEL, parse_model_file, solve_policy};

fn bench_solve(c: &mut Criterion) {
    let (file, players) = parse_model_file(EXAMPLE_MODEL).unwrap();
    let model = compose(&players, &file.events, &file.sync, &file.marked).unwrap();
    c.bench_function("solve_two_v_two", |b| {
        b.iter(|| solve_policy(&model, 1e-9).unwrap())
    });
}

criterion_group!(benches, bench_solve);
criterion_main!(benches);
