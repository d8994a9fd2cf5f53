//! Approximate Bayesian computation baselines: rejection sampling and
//! population Monte Carlo (ABC-SMC) with a Gaussian perturbation kernel.
//!
//! Data sets are compared through the Euclidean distance between normalized
//! histograms (see [`crate::histogram`]). Every parameter evaluation draws
//! `samples_per_theta` simulator outputs from its own random stream, and the
//! total number of simulator calls never exceeds `total_budget`.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::{l2_distance, HistogramSpec};
use crate::rng::{derive_seed, seeded, SimRng, StreamFactory};
use crate::simulators::{simulate_n, Simulator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AbcConfig {
    /// Uniform prior; `None` uses the simulator's prior box.
    pub prior_box: Option<Vec<(f64, f64)>>,
    pub population_size: usize,
    pub num_generations: usize,
    /// Fraction of the previous generation's distances that sets the next
    /// tolerance.
    pub quantile: f64,
    pub samples_per_theta: usize,
    pub total_budget: u64,
    /// Cells per dimension of the grid used to locate the posterior mode.
    pub map_bins: usize,
    /// Perturbation variance as a multiple of the weighted population
    /// variance.
    pub kernel_scale: f64,
    pub min_acceptance_rate: f64,
}

impl Default for AbcConfig {
    fn default() -> Self {
        Self {
            prior_box: None,
            population_size: 100,
            num_generations: 10,
            quantile: 0.5,
            samples_per_theta: 128,
            total_budget: 160_000,
            map_bins: 20,
            kernel_scale: 2.0,
            min_acceptance_rate: 1e-4,
        }
    }
}

impl AbcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 2 {
            return Err(Error::Config("population size must be at least 2".into()));
        }
        if !(self.quantile > 0.0 && self.quantile <= 1.0) {
            return Err(Error::Config(format!("quantile {} must lie in (0, 1]", self.quantile)));
        }
        if self.total_budget == 0 {
            return Err(Error::Config("simulation budget must be positive".into()));
        }
        if self.samples_per_theta == 0 || self.map_bins == 0 || self.num_generations == 0 {
            return Err(Error::Config(
                "samples per parameter, map bins and generations must be positive".into(),
            ));
        }
        if let Some(prior) = &self.prior_box {
            if prior.iter().any(|(lo, hi)| !(hi > lo)) {
                return Err(Error::Config("prior box bounds must satisfy low < high".into()));
            }
        }
        Ok(())
    }

    fn prior(&self, sim: &dyn Simulator) -> Result<Vec<(f64, f64)>> {
        let prior = self.prior_box.clone().unwrap_or_else(|| sim.prior_box());
        if prior.len() != sim.theta_dim() {
            return Err(Error::DimensionMismatch {
                context: "prior box",
                expected: sim.theta_dim(),
                got: prior.len(),
            });
        }
        Ok(prior)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub theta: Vec<f64>,
    pub distance: f64,
    pub weight: f64,
    pub generation: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbcResult {
    /// Accepted populations, oldest first; the last one is the posterior
    /// sample.
    pub populations: Vec<Vec<Particle>>,
    /// Acceptance tolerance of each population.
    pub epsilons: Vec<f64>,
    /// Cumulative simulator calls when each population was completed.
    pub generation_simulations: Vec<u64>,
    pub point_estimate: Vec<f64>,
    pub simulations: u64,
    /// Fewer particles than requested (rejection) or the first generation
    /// could not be completed (SMC).
    pub partial: bool,
    /// Why an SMC run stopped before `num_generations`, if it did.
    pub stop_reason: Option<String>,
}

impl AbcResult {
    pub fn posterior(&self) -> &[Particle] {
        self.populations.last().map_or(&[], Vec::as_slice)
    }

    /// All populations as JSON-lines, one particle per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for p in self.populations.iter().flatten() {
            serde_json::to_writer(&mut out, p)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Distance between an observed normalized histogram and the histogram of a
/// simulated set.
pub fn summary_distance<X: AsRef<[f64]>>(observed_hist: &[f64], simulated: &[X], spec: &HistogramSpec) -> f64 {
    l2_distance(observed_hist, &spec.histogram(simulated))
}

/// Center of the grid cell with the largest total weight.
pub fn map_estimate(particles: &[Particle], prior: &[(f64, f64)], bins: usize) -> Vec<f64> {
    let dim = prior.len();
    let mut cells: std::collections::BTreeMap<Vec<usize>, f64> = Default::default();
    for p in particles {
        let key: Vec<usize> = p
            .theta
            .iter()
            .zip(prior)
            .map(|(t, (lo, hi))| (((t - lo) / (hi - lo) * bins as f64).floor().max(0.0) as usize).min(bins - 1))
            .collect();
        *cells.entry(key).or_insert(0.0) += p.weight;
    }
    let best = cells
        .iter()
        .fold(None::<(&Vec<usize>, f64)>, |best, (k, w)| match best {
            Some((_, bw)) if bw >= *w => best,
            _ => Some((k, *w)),
        });
    match best {
        Some((key, _)) => key
            .iter()
            .zip(prior)
            .map(|(&k, (lo, hi))| lo + (k as f64 + 0.5) * (hi - lo) / bins as f64)
            .collect(),
        None => (0..dim).map(|i| 0.5 * (prior[i].0 + prior[i].1)).collect(),
    }
}

/// Simulation bookkeeping shared by both samplers.
struct Evaluator<'a> {
    sim: &'a dyn Simulator,
    observed_hist: &'a [f64],
    spec: &'a HistogramSpec,
    streams: StreamFactory,
    samples_per_theta: usize,
    budget: u64,
    simulations: u64,
    evaluations: u64,
}

impl Evaluator<'_> {
    fn can_afford(&self) -> bool {
        self.simulations + self.samples_per_theta as u64 <= self.budget
    }

    fn distance(&mut self, theta: &[f64]) -> Result<f64> {
        let mut rng = self.streams.stream(self.evaluations);
        self.evaluations += 1;
        let xs = simulate_n(self.sim, theta, self.samples_per_theta, &mut rng)?;
        self.simulations += self.samples_per_theta as u64;
        Ok(summary_distance(self.observed_hist, &xs, self.spec))
    }
}

fn sample_prior(prior: &[(f64, f64)], rng: &mut SimRng) -> Vec<f64> {
    prior.iter().map(|(lo, hi)| rng.random_range(*lo..*hi)).collect()
}

fn in_box(theta: &[f64], prior: &[(f64, f64)]) -> bool {
    theta.iter().zip(prior).all(|(t, (lo, hi))| t >= lo && t <= hi)
}

/// Spends the whole budget on prior draws and keeps the `population_size`
/// draws closest to the observed histogram.
pub fn abc_rejection(
    config: &AbcConfig,
    sim: &dyn Simulator,
    observed_hist: &[f64],
    spec: &HistogramSpec,
    seed: u64,
) -> Result<AbcResult> {
    config.validate()?;
    let prior = config.prior(sim)?;
    let mut rng = seeded(derive_seed(seed, "abc-prior"));
    let mut eval = Evaluator {
        sim,
        observed_hist,
        spec,
        streams: StreamFactory::new(derive_seed(seed, "abc-simulator")),
        samples_per_theta: config.samples_per_theta,
        budget: config.total_budget,
        simulations: 0,
        evaluations: 0,
    };
    let mut draws = Vec::new();
    while eval.can_afford() {
        let theta = sample_prior(&prior, &mut rng);
        let distance = eval.distance(&theta)?;
        draws.push((theta, distance));
    }
    draws.sort_by(|a, b| a.1.total_cmp(&b.1));
    draws.truncate(config.population_size);
    let partial = draws.len() < config.population_size;
    let w = 1.0 / draws.len().max(1) as f64;
    let particles: Vec<Particle> = draws
        .into_iter()
        .map(|(theta, distance)| Particle {
            theta,
            distance,
            weight: w,
            generation: 0,
        })
        .collect();
    let epsilon = particles.last().map_or(f64::INFINITY, |p| p.distance);
    let point_estimate = map_estimate(&particles, &prior, config.map_bins);
    Ok(AbcResult {
        populations: vec![particles],
        epsilons: vec![epsilon],
        generation_simulations: vec![eval.simulations],
        point_estimate,
        simulations: eval.simulations,
        partial,
        stop_reason: None,
    })
}

fn quantile_of(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let idx = ((q * values.len() as f64).ceil() as usize).clamp(1, values.len()) - 1;
    values[idx]
}

fn weighted_variance(particles: &[Particle], dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|i| {
            let mean: f64 = particles.iter().map(|p| p.weight * p.theta[i]).sum();
            particles
                .iter()
                .map(|p| p.weight * (p.theta[i] - mean).powi(2))
                .sum()
        })
        .collect()
}

/// Unnormalized Gaussian kernel density (the normalization cancels in the
/// importance weights).
fn kernel(theta: &[f64], center: &[f64], var: &[f64]) -> f64 {
    let q: f64 = theta
        .iter()
        .zip(center)
        .zip(var)
        .map(|((t, c), v)| (t - c) * (t - c) / v)
        .sum();
    (-0.5 * q).exp()
}

fn normalize(particles: &mut [Particle]) {
    let total: f64 = particles.iter().map(|p| p.weight).sum();
    for p in particles.iter_mut() {
        p.weight /= total;
    }
}

/// Population Monte Carlo ABC with importance weights
/// `w_i ∝ prior(theta_i) / sum_j w_j K(theta_i | theta_j)`.
pub fn abc_smc(
    config: &AbcConfig,
    sim: &dyn Simulator,
    observed_hist: &[f64],
    spec: &HistogramSpec,
    seed: u64,
) -> Result<AbcResult> {
    config.validate()?;
    let prior = config.prior(sim)?;
    let dim = prior.len();
    let n = config.population_size;
    let mut rng = seeded(derive_seed(seed, "abc-smc"));
    let mut eval = Evaluator {
        sim,
        observed_hist,
        spec,
        streams: StreamFactory::new(derive_seed(seed, "abc-simulator")),
        samples_per_theta: config.samples_per_theta,
        budget: config.total_budget,
        simulations: 0,
        evaluations: 0,
    };

    // Generation 0: plain prior draws, all accepted.
    let mut first = Vec::with_capacity(n);
    while first.len() < n && eval.can_afford() {
        let theta = sample_prior(&prior, &mut rng);
        let distance = eval.distance(&theta)?;
        first.push(Particle {
            theta,
            distance,
            weight: 1.0,
            generation: 0,
        });
    }
    if first.is_empty() {
        return Err(Error::Config(
            "budget does not cover a single parameter evaluation".into(),
        ));
    }
    let partial = first.len() < n;
    normalize(&mut first);
    let eps0 = first.iter().map(|p| p.distance).fold(0.0, f64::max);
    let mut populations = vec![first];
    let mut epsilons = vec![eps0];
    let mut generation_simulations = vec![eval.simulations];
    let mut stop_reason = partial.then(|| "budget exhausted in the first generation".to_string());

    let max_attempts = (1.0 / config.min_acceptance_rate).ceil() as u64;
    'generations: for generation in 1..config.num_generations {
        if stop_reason.is_some() {
            break;
        }
        let prev = populations.last().unwrap();
        let mut prev_distances: Vec<f64> = prev.iter().map(|p| p.distance).collect();
        let epsilon = quantile_of(&mut prev_distances, config.quantile).min(*epsilons.last().unwrap());
        let var: Vec<f64> = weighted_variance(prev, dim)
            .iter()
            .zip(&prior)
            .map(|(v, (lo, hi))| (config.kernel_scale * v).max(1e-12 * (hi - lo) * (hi - lo)))
            .collect();
        let sd: Vec<f64> = var.iter().map(|v| v.sqrt()).collect();
        let cumulative: Vec<f64> = prev
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p.weight;
                Some(*acc)
            })
            .collect();

        let mut accepted = Vec::with_capacity(n);
        let mut attempts = 0u64;
        while accepted.len() < n {
            if !eval.can_afford() {
                stop_reason = Some(format!("budget exhausted during generation {generation}"));
                break 'generations;
            }
            let theta = loop {
                let u: f64 = rng.random::<f64>() * cumulative.last().unwrap();
                let j = cumulative.partition_point(|c| *c < u).min(prev.len() - 1);
                let candidate: Vec<f64> = prev[j]
                    .theta
                    .iter()
                    .zip(&sd)
                    .map(|(t, s)| t + s * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                if in_box(&candidate, &prior) {
                    break candidate;
                }
            };
            let distance = eval.distance(&theta)?;
            attempts += 1;
            if distance <= epsilon {
                accepted.push(Particle {
                    theta,
                    distance,
                    weight: 0.0,
                    generation,
                });
            }
            if attempts >= max_attempts && (accepted.len() as f64) < config.min_acceptance_rate * attempts as f64 {
                stop_reason = Some(format!(
                    "acceptance rate below {} in generation {generation}",
                    config.min_acceptance_rate
                ));
                break 'generations;
            }
        }
        for p in accepted.iter_mut() {
            let denom: f64 = prev.iter().map(|q| q.weight * kernel(&p.theta, &q.theta, &var)).sum();
            p.weight = 1.0 / denom;
        }
        normalize(&mut accepted);
        populations.push(accepted);
        epsilons.push(epsilon);
        generation_simulations.push(eval.simulations);
    }

    let point_estimate = map_estimate(populations.last().unwrap(), &prior, config.map_bins);
    Ok(AbcResult {
        populations,
        epsilons,
        generation_simulations,
        point_estimate,
        simulations: eval.simulations,
        partial,
        stop_reason,
    })
}
