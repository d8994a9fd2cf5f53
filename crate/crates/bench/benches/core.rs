use std::hint::black_box;

use avo_core::rng::seeded;
use avo_core::simulators::{simulate_n, Carl5d, Poisson, Weinberg};
use avo_core::{run_avo, AvoConfig, Discriminator, ProposalParams, Simulator};
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

fn batch(dim: usize, n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..dim).map(|j| ((i * 7 + j * 3) % 11) as f64 / 5.0 - 1.0).collect())
        .collect()
}

fn discriminator(c: &mut Criterion) {
    let disc = Discriminator::new(5, &[20, 20, 20], &mut seeded(0)).unwrap();
    let xs = batch(5, 32);
    let labelled: Vec<(&[f64], f64)> = xs.iter().enumerate().map(|(i, x)| (x.as_slice(), (i % 2) as f64)).collect();
    let mut g = c.benchmark_group("discriminator");
    g.bench_function("forward_x32", |b| {
        b.iter(|| xs.iter().map(|x| disc.forward(black_box(x)).unwrap()).sum::<f64>())
    });
    g.bench_function("bce_backward_x32", |b| b.iter(|| disc.bce_loss_and_grad(black_box(&labelled)).unwrap()));
    g.bench_function("r1_x16", |b| b.iter(|| disc.r1_penalty_and_grad(black_box(&xs[..16])).unwrap()));
    g.finish();
}

fn simulators(c: &mut Criterion) {
    let mut g = c.benchmark_group("simulators");
    let mut rng = seeded(1);
    g.bench_function("poisson_x1000", |b| b.iter(|| simulate_n(&Poisson, black_box(&[2.0]), 1000, &mut rng).unwrap()));
    g.bench_function("weinberg_x1000", |b| {
        b.iter(|| simulate_n(&Weinberg, black_box(&[45.0, 1.0]), 1000, &mut rng).unwrap())
    });
    g.bench_function("carl5d_x1000", |b| b.iter(|| simulate_n(&Carl5d, black_box(&[0.5, -0.5]), 1000, &mut rng).unwrap()));
    g.finish();
}

fn avo(c: &mut Criterion) {
    let observed = simulate_n(&Poisson, &[7f64.ln()], 10_000, &mut seeded(2)).unwrap();
    let config = AvoConfig {
        iterations: 10,
        hidden_layers: vec![20, 20, 20],
        initial_proposal: Some(ProposalParams::isotropic(vec![0.0], 0.5).unwrap()),
        ..AvoConfig::default()
    };
    c.bench_function("avo/poisson_10_iterations", |b| {
        b.iter_batched(
            || config.clone(),
            |cfg| run_avo(&cfg, &Poisson as &dyn Simulator, &observed, None).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, discriminator, simulators, avo);
criterion_main!(benches);
