mod common;

use avo_core::rng::seeded;
use avo_core::simulators::{
    carl5d_moments, sample_poisson, simulate_n, weinberg_asymmetry, weinberg_cdf, Carl5d, GaussianToy,
    Poisson, Weinberg, WEINBERG_Z,
};
use common::{adaptive_simpson, chi2_p_value, ks_p_value, ks_statistic, mean_and_var};
use statrs::distribution::{Discrete, Poisson as PoissonPmf};

/// Pearson statistic over cells pooled so every expected count is at least 5.
fn poisson_chi2(lambda: f64, n: usize, seed: u64) -> (f64, usize) {
    let mut rng = seeded(seed);
    let pmf = PoissonPmf::new(lambda).unwrap();
    let max_k = (lambda + 20.0 * lambda.sqrt() + 20.0) as usize;
    let mut counts = vec![0u64; max_k + 1];
    for _ in 0..n {
        let k = sample_poisson(lambda, &mut rng) as usize;
        counts[k.min(max_k)] += 1;
    }
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp) = (0.0, 0.0);
    let mut cumulative = 0.0;
    for k in 0..max_k {
        let p = pmf.pmf(k as u64);
        cumulative += p;
        obs += counts[k] as f64;
        exp += p * n as f64;
        if exp >= 5.0 {
            cells.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
    }
    obs += counts[max_k] as f64;
    exp += (1.0 - cumulative) * n as f64;
    // Fold the remaining tail into the last cell.
    let last = cells.last_mut().unwrap();
    last.0 += obs;
    last.1 += exp;
    let stat = cells.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    (stat, cells.len() - 1)
}

#[test]
fn poisson_chi_squared_goodness_of_fit() {
    for (i, lambda) in [0.5, 7.0, 50.0].into_iter().enumerate() {
        let (stat, dof) = poisson_chi2(lambda, 1_000_000, 40 + i as u64);
        let p = chi2_p_value(stat, dof);
        assert!(p >= 1e-4, "lambda {lambda}: chi2 {stat} on {dof} dof, p = {p}");
    }
}

#[test]
fn poisson_moments_at_seven() {
    let xs: Vec<f64> = simulate_n(&Poisson, &[7f64.ln()], 1_000_000, &mut seeded(3))
        .unwrap()
        .into_iter()
        .map(|x| x[0])
        .collect();
    let (mean, var) = mean_and_var(&xs);
    assert!((mean - 7.0).abs() <= 4.0 * 7f64.sqrt() / 1e3, "{mean}");
    assert!((var / 7.0 - 1.0).abs() <= 0.02, "{var}");
}

#[test]
fn poisson_negligible_rate_gives_zero() {
    let xs = simulate_n(&Poisson, &[-30.0], 100_000, &mut seeded(1)).unwrap();
    assert!(xs.iter().all(|x| x[0] == 0.0));
}

#[test]
fn weinberg_normalization_by_quadrature() {
    let z = adaptive_simpson(&|x| 1.0 + x * x, -1.0, 1.0, 1e-13);
    assert!((z - WEINBERG_Z).abs() <= 1e-10);
    for c in [-1.98, -0.4, 0.0, 0.9, 1.98] {
        let total = adaptive_simpson(&|x| (1.0 + x * x + c * x) / WEINBERG_Z, -1.0, 1.0, 1e-13);
        assert!((total - 1.0).abs() <= 1e-10, "c = {c}: {total}");
        let cdf_mid = adaptive_simpson(&|x| (1.0 + x * x + c * x) / WEINBERG_Z, -1.0, 0.3, 1e-13);
        assert!((cdf_mid - weinberg_cdf(0.3, c)).abs() <= 1e-10);
    }
}

#[test]
fn weinberg_empirical_cdf_matches_analytic() {
    for (i, theta) in [[40.0, 0.5], [45.0, 1.0], [47.5, 1.8], [50.0, 3.0], [42.0, -1.0]]
        .into_iter()
        .enumerate()
    {
        let c = weinberg_asymmetry(theta[0], theta[1]);
        let mut xs: Vec<f64> = simulate_n(&Weinberg, &theta, 100_000, &mut seeded(i as u64))
            .unwrap()
            .into_iter()
            .map(|x| x[0])
            .collect();
        let d = ks_statistic(&mut xs, |x| weinberg_cdf(x, c));
        assert!(d <= 0.006, "theta {theta:?}: KS {d}");
    }
}

#[test]
fn weinberg_symmetric_at_resonance() {
    let xs: Vec<f64> = simulate_n(&Weinberg, &[45.0, 1.0], 1_000_000, &mut seeded(8))
        .unwrap()
        .into_iter()
        .map(|x| x[0])
        .collect();
    let (mean, var) = mean_and_var(&xs);
    assert!(mean.abs() <= 4.0 * var.sqrt() / 1e3, "{mean}");
}

fn carl_samples(theta: [f64; 2], n: usize, seed: u64) -> Vec<Vec<f64>> {
    simulate_n(&Carl5d, &theta, n, &mut seeded(seed)).unwrap()
}

#[test]
fn carl_moments_match_closed_form() {
    let n = 1_000_000;
    for (seed, theta) in [[0.0, 0.0], [1.2, -0.7]].into_iter().enumerate() {
        let xs = carl_samples(theta, n, seed as u64);
        let (mean, cov) = carl5d_moments(theta[0], theta[1]);
        let nf = n as f64;
        let emp_mean: Vec<f64> = (0..5).map(|i| xs.iter().map(|x| x[i]).sum::<f64>() / nf).collect();
        for i in 0..5 {
            let se = (cov[i][i] / nf).sqrt();
            assert!((emp_mean[i] - mean[i]).abs() <= 3.0 * se, "mean {i}: {} vs {}", emp_mean[i], mean[i]);
        }
        for i in 0..5 {
            for j in i..5 {
                let prods: Vec<f64> = xs
                    .iter()
                    .map(|x| (x[i] - emp_mean[i]) * (x[j] - emp_mean[j]))
                    .collect();
                let (c, v) = mean_and_var(&prods);
                let se = (v / nf).sqrt();
                assert!((c - cov[i][j]).abs() <= 3.0 * se, "cov ({i},{j}): {c} vs {}", cov[i][j]);
            }
        }
    }
}

#[test]
fn carl_means_respond_to_parameters() {
    let n = 100_000;
    let a = carl_samples([0.0, 0.0], n, 1);
    let b = carl_samples([2.0, 0.0], n, 2);
    let mean = |xs: &[Vec<f64>], i: usize| xs.iter().map(|x| x[i]).sum::<f64>() / n as f64;
    let (_, cov) = carl5d_moments(0.0, 0.0);
    let dist: f64 = (0..5).map(|i| (mean(&a, i) - mean(&b, i)).powi(2)).sum::<f64>().sqrt();
    let se = (cov[0][0].max(cov[4][4]) * 2.0 / n as f64).sqrt();
    assert!(dist > 10.0 * se, "{dist} vs se {se}");
}

#[test]
fn gaussian_toy_moments() {
    for (seed, mu) in [0.0, 5.0].into_iter().enumerate() {
        let xs: Vec<f64> = simulate_n(&GaussianToy, &[mu], 1_000_000, &mut seeded(seed as u64))
            .unwrap()
            .into_iter()
            .map(|x| x[0])
            .collect();
        let (mean, var) = mean_and_var(&xs);
        assert!((mean - mu).abs() <= 4e-3);
        assert!((var - 1.0).abs() <= 0.01);
    }
}

#[test]
fn ks_p_value_sanity() {
    assert!(ks_p_value(0.0, 1000) > 0.99);
    assert!(ks_p_value(0.2, 1000) < 1e-6);
}
