use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sairod::{build_policy_dtmc, step, transition_distribution, Action, Distribution, Parameters};
use sairod_bench::{busy_state, seed_mixture, untested_setup};

fn transition(c: &mut Criterion) {
    let mut group = c.benchmark_group("transition_distribution");
    for n in [8u32, 16, 24] {
        let v = busy_state(n);
        let params = Parameters::reference(n, 2);
        let action = Action::new(3, 1);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| transition_distribution(black_box(&v), &action, &params).unwrap())
        });
    }
    group.finish();
}

fn build(c: &mut Criterion) {
    let mut group = c.benchmark_group("build_policy_dtmc");
    group.sample_size(10);
    for n in [8u32, 12, 16] {
        let (params, kind, policy) = untested_setup(n, 5, 3);
        let starts: Vec<_> = seed_mixture(n).into_iter().map(|e| e.0).collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| build_policy_dtmc(&starts, &policy, &params, kind).unwrap())
        });
    }
    group.finish();
}

fn propagate(c: &mut Criterion) {
    let mut group = c.benchmark_group("step");
    for n in [12u32, 16] {
        let (params, kind, policy) = untested_setup(n, 5, 3);
        let mix = seed_mixture(n);
        let starts: Vec<_> = mix.iter().map(|e| e.0).collect();
        let dtmc = build_policy_dtmc(&starts, &policy, &params, kind).unwrap();
        let x0 = Distribution::from_weights(dtmc.space(), &mix).unwrap();
        let x = step(&dtmc, &step(&dtmc, &x0).unwrap()).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| step(&dtmc, black_box(&x)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, transition, build, propagate);
criterion_main!(benches);
