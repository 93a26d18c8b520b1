//! Closed forms against the generated functionals and the dense oracle.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fuzzyspec::action::{
    closed_form_trace, generated_trace, oracle_trace, tr_d4_dim4_with, QuarticPath,
};
use fuzzyspec::chords::enumerate_with_cap;
use fuzzyspec::mcmc::{propose, Chain};
use fuzzyspec::{generate_trace_functionals, random_dirac_data, ChainConfig, EvalPath, Signature};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sig(p: usize, q: usize) -> Signature {
    Signature::new(p, q).unwrap()
}

fn trace_paths(c: &mut Criterion) {
    let cases = [
        (sig(1, 1), 6, 4),
        (sig(1, 1), 6, 6),
        (sig(1, 3), 4, 4),
        (sig(2, 2), 8, 4),
    ];
    for (s, n, m) in cases {
        let data = random_dirac_data(s, n, 1, None, false).unwrap();
        // Warm the functional cache so the generated path measures evaluation.
        generate_trace_functionals(s, m / 2).unwrap();
        let mut group = c.benchmark_group(format!("tr_d{m}/{s}"));
        group.bench_with_input(BenchmarkId::new("closed_form", n), &data, |b, d| {
            b.iter(|| closed_form_trace(black_box(d), m))
        });
        group.bench_with_input(BenchmarkId::new("generated", n), &data, |b, d| {
            b.iter(|| generated_trace(black_box(d), m).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("oracle", n), &data, |b, d| {
            b.iter(|| oracle_trace(black_box(d), m).unwrap())
        });
        group.finish();
    }
}

fn quartic_fast_paths(c: &mut Criterion) {
    let mut group = c.benchmark_group("tr_d4_dim4_paths");
    for (s, path) in [
        (sig(0, 4), QuarticPath::Riemann),
        (sig(1, 3), QuarticPath::Lorentz),
    ] {
        let data = random_dirac_data(s, 10, 2, None, false).unwrap();
        group.bench_function(BenchmarkId::new("general", s), |b| {
            b.iter(|| tr_d4_dim4_with(black_box(&data), QuarticPath::General).unwrap())
        });
        group.bench_function(BenchmarkId::new(format!("{path:?}"), s), |b| {
            b.iter(|| tr_d4_dim4_with(black_box(&data), path).unwrap())
        });
    }
    group.finish();
}

fn symbolic(c: &mut Criterion) {
    c.bench_function("chords/enumerate_12", |b| {
        b.iter(|| enumerate_with_cap(black_box(12), 12).unwrap())
    });
}

fn sampling(c: &mut Criterion) {
    let config = ChainConfig {
        signature: sig(1, 1),
        n: 6,
        action: "2:1,4:0.25".parse().unwrap(),
        step_size: 0.05,
        n_steps: 10,
        burn_in: 0,
        thinning: 1,
        seed: 3,
        traceless_l: false,
        eval_path: EvalPath::ClosedForm,
    };
    let mut chain = Chain::new(config).unwrap();
    c.bench_function("mcmc/step_1_1_N6", |b| b.iter(|| chain.step().unwrap()));
    let data = random_dirac_data(sig(2, 2), 6, 0, None, false).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    c.bench_function("mcmc/propose_2_2_N6", |b| {
        b.iter(|| propose(black_box(&data), 0.1, &mut rng))
    });
}

criterion_group!(benches, trace_paths, quartic_fast_paths, symbolic, sampling);
criterion_main!(benches);
