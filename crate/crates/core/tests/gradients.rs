mod common;

use std::time::Instant;

use avo_core::discriminator::Discriminator;
use avo_core::rng::seeded;
use avo_core::ProposalParams;
use common::{adaptive_simpson, central_diff, rel_err};
use rand::Rng;

const H: f64 = 1e-5;

fn random_points(dim: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seeded(seed);
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect()
}

/// Points whose hidden pre-activations all stay clear of the PReLU kink.
fn away_from_kinks(disc: &Discriminator, points: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    points
        .into_iter()
        .filter(|x| disc.kink_margin(x).unwrap() > 1e-3)
        .collect()
}

fn with_params(disc: &Discriminator, flat: &[f64]) -> Discriminator {
    let mut d = disc.clone();
    d.set_flat(flat).unwrap();
    d
}

#[test]
fn bce_gradient_matches_finite_differences() {
    for seed in 0..4 {
        let disc = Discriminator::new(3, &[5, 5], &mut seeded(seed)).unwrap();
        let xs = away_from_kinks(&disc, random_points(3, 12, seed + 100));
        assert!(xs.len() >= 4);
        let batch: Vec<(&[f64], f64)> = xs
            .iter()
            .enumerate()
            .map(|(i, x)| (x.as_slice(), (i % 2) as f64))
            .collect();
        let (_, grad) = disc.bce_loss_and_grad(&batch).unwrap();
        let fd = central_diff(
            &|p| with_params(&disc, p).bce_loss_and_grad(&batch).unwrap().0,
            &disc.to_flat(),
            H,
        );
        for (i, (a, b)) in grad.iter().zip(&fd).enumerate() {
            assert!(rel_err(*a, *b, 1e-6) <= 1e-5, "seed {seed} param {i}: {a} vs {b}");
        }
    }
}

#[test]
fn deep_network_gradient_matches_finite_differences() {
    let disc = Discriminator::new(2, &[20, 20, 20], &mut seeded(7)).unwrap();
    let xs = away_from_kinks(&disc, random_points(2, 16, 8));
    let batch: Vec<(&[f64], f64)> = xs.iter().map(|x| (x.as_slice(), 1.0)).collect();
    let (_, grad) = disc.bce_loss_and_grad(&batch).unwrap();
    let fd = central_diff(
        &|p| with_params(&disc, p).bce_loss_and_grad(&batch).unwrap().0,
        &disc.to_flat(),
        H,
    );
    for (a, b) in grad.iter().zip(&fd) {
        assert!(rel_err(*a, *b, 1e-6) <= 1e-4, "{a} vs {b}");
    }
}

#[test]
fn input_gradient_matches_finite_differences() {
    for seed in 0..4 {
        let disc = Discriminator::new(4, &[8, 6], &mut seeded(seed)).unwrap();
        for x in away_from_kinks(&disc, random_points(4, 10, seed + 50)) {
            let g = disc.input_grad(&x).unwrap();
            let fd = central_diff(&|y| disc.forward(y).unwrap(), &x, H);
            for (a, b) in g.iter().zip(&fd) {
                assert!(rel_err(*a, *b, 1e-6) <= 1e-5, "{a} vs {b}");
            }
        }
    }
}

#[test]
fn r1_gradient_matches_finite_differences() {
    for seed in 0..4 {
        let disc = Discriminator::new(3, &[6, 5], &mut seeded(seed + 10)).unwrap();
        let xs = away_from_kinks(&disc, random_points(3, 10, seed + 20));
        let (penalty, grad) = disc.r1_penalty_and_grad(&xs).unwrap();
        assert!(penalty >= 0.0);
        let fd = central_diff(
            &|p| with_params(&disc, p).r1_penalty_and_grad(&xs).unwrap().0,
            &disc.to_flat(),
            H,
        );
        let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        for (i, (a, b)) in grad.iter().zip(&fd).enumerate() {
            assert!(rel_err(*a, *b, 1e-4 * scale) <= 1e-4, "seed {seed} param {i}: {a} vs {b}");
        }
    }
}

#[test]
fn r1_penalty_is_squared_input_gradient() {
    let disc = Discriminator::new(2, &[7, 7], &mut seeded(3)).unwrap();
    let xs = random_points(2, 5, 4);
    let direct: f64 = xs
        .iter()
        .map(|x| disc.input_grad(x).unwrap().iter().map(|g| g * g).sum::<f64>())
        .sum::<f64>()
        / xs.len() as f64;
    let (penalty, _) = disc.r1_penalty_and_grad(&xs).unwrap();
    assert!((penalty - direct).abs() <= 1e-14 * direct.max(1e-300));
}

#[test]
fn proposal_density_integrates_to_one() {
    let mut rng = seeded(11);
    for _ in 0..10 {
        let mean = rng.random_range(-3.0..3.0);
        let log_scale = rng.random_range(-1.5..1.0);
        let p = ProposalParams::new(vec![mean], vec![log_scale]).unwrap();
        let sigma = p.scale()[0];
        let total = adaptive_simpson(
            &|t| p.log_density(&[t]).unwrap().exp(),
            mean - 12.0 * sigma,
            mean + 12.0 * sigma,
            1e-10,
        );
        assert!((total - 1.0).abs() <= 1e-6, "{total}");
    }
}

#[test]
fn proposal_score_matches_finite_differences() {
    let mut rng = seeded(5);
    for _ in 0..50 {
        let d = rng.random_range(1..4);
        let mean: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let log_scale: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = ProposalParams::new(mean, log_scale).unwrap();
        let theta = p.sample(&mut rng);
        let fd = central_diff(
            &|flat| {
                let mut q = p.clone();
                q.set_flat(flat).unwrap();
                q.log_density(&theta).unwrap()
            },
            &p.to_flat(),
            H,
        );
        for (a, b) in p.score(&theta).unwrap().iter().zip(&fd) {
            assert!(rel_err(*a, *b, 1e-3) <= 1e-6, "{a} vs {b}");
        }
    }
}

/// Backpropagation on a wide layer should cost a small constant multiple of
/// the forward pass, not grow with the parameter count.
#[test]
fn backprop_cost_is_linear_in_forward_cost() {
    let disc = Discriminator::new(64, &[512, 512], &mut seeded(1)).unwrap();
    let xs = random_points(64, 64, 2);
    let labeled: Vec<(&[f64], f64)> = xs.iter().map(|x| (x.as_slice(), 1.0)).collect();

    let time = |f: &dyn Fn()| {
        f();
        let start = Instant::now();
        for _ in 0..3 {
            f();
        }
        start.elapsed().as_secs_f64()
    };
    let forward = time(&|| {
        for x in &xs {
            std::hint::black_box(disc.forward(x).unwrap());
        }
    });
    let backward = time(&|| {
        std::hint::black_box(disc.bce_loss_and_grad(&labeled).unwrap());
    });
    let r1 = time(&|| {
        std::hint::black_box(disc.r1_penalty_and_grad(&xs).unwrap());
    });
    assert!(backward <= 20.0 * forward, "backward {backward}s vs forward {forward}s");
    assert!(r1 <= 40.0 * forward, "r1 {r1}s vs forward {forward}s");
}
