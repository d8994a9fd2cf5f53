//! Adversarial variational optimization.
//!
//! Each iteration takes `k` RMSProp steps on the discriminator (binary
//! cross-entropy on half real, half synthetic data plus an R1 penalty on the
//! real half), then one RMSProp step on the proposal using a baselined
//! score-function estimate of `grad_psi E[log(1 - d(x))]`, optionally plus an
//! entropy term.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::discriminator::{Discriminator, EPS};
use crate::error::{check_dim, Error, Result};
use crate::optimizer::RmsProp;
use crate::proposal::ProposalParams;
use crate::rng::{derive_seed, seeded, SimRng, StreamFactory};
use crate::simulators::Simulator;

/// Baseline subtracted from `f = log(1 - d(x))` in the score-function
/// estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// Per-component `b_i = sum s_i^2 f / sum s_i^2`.
    #[default]
    VarianceMinimizing,
    None,
    /// Batch mean of `f`, shared by all components.
    MeanF,
}

/// Which samples the baseline is estimated from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BaselineSource {
    /// The same mini-batch the gradient is averaged over.
    #[default]
    SameBatch,
    /// Cross-fitted halves: each half is centered with the baseline estimated
    /// on the other half, which removes the finite-batch bias.
    SeparateHalf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AvoConfig {
    /// Discriminator steps per iteration.
    pub k: usize,
    /// Mini-batch size `M` (even, at least 2).
    pub batch_size: usize,
    pub r1_coefficient: f64,
    pub entropy_coefficient: f64,
    pub iterations: usize,
    pub lr_discriminator: f64,
    pub lr_proposal: f64,
    pub baseline: Baseline,
    pub baseline_source: BaselineSource,
    /// Hidden layer widths of the discriminator.
    pub hidden_layers: Vec<usize>,
    /// Overrides the simulator's default starting proposal.
    pub initial_proposal: Option<ProposalParams>,
    pub seed: u64,
}

impl Default for AvoConfig {
    fn default() -> Self {
        Self {
            k: 1,
            batch_size: 32,
            r1_coefficient: 10.0,
            entropy_coefficient: 0.0,
            iterations: 3000,
            lr_discriminator: 1e-3,
            lr_proposal: 1e-3,
            baseline: Baseline::VarianceMinimizing,
            baseline_source: BaselineSource::SameBatch,
            hidden_layers: vec![20, 20, 20],
            initial_proposal: None,
            seed: 0,
        }
    }
}

impl AvoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 || self.batch_size % 2 != 0 {
            return Err(Error::Config(format!(
                "batch size {} must be even and at least 2",
                self.batch_size
            )));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if !(self.r1_coefficient >= 0.0) || !(self.entropy_coefficient >= 0.0) {
            return Err(Error::Config("regularization coefficients must be non-negative".into()));
        }
        if !(self.lr_discriminator > 0.0) || !(self.lr_proposal > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        Ok(())
    }

    /// Simulator calls consumed by one iteration, `k M / 2 + M`.
    pub fn simulations_per_iteration(&self) -> u64 {
        (self.k * self.batch_size / 2 + self.batch_size) as u64
    }

    /// Largest iteration count whose simulations fit in `budget`.
    pub fn iterations_for_budget(&self, budget: u64) -> usize {
        (budget / self.simulations_per_iteration()) as usize
    }
}

/// Score-function estimate of a gradient in proposal-parameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientEstimate {
    pub grad: Vec<f64>,
    pub batch_size: usize,
    /// Per-component baseline actually subtracted (averaged over halves for
    /// [`BaselineSource::SeparateHalf`]).
    pub baseline: Vec<f64>,
    /// Batch mean of `f`, an estimate of the generator objective.
    pub objective: f64,
}

/// `log(1 - d(x))` with the discriminator output clamped.
pub fn generator_value(disc: &Discriminator, x: &[f64]) -> Result<f64> {
    let d = disc.forward(x)?.clamp(EPS, 1.0 - EPS);
    Ok((1.0 - d).ln())
}

fn baseline_from(scores: &[Vec<f64>], values: &[f64], kind: Baseline, dim: usize) -> Vec<f64> {
    match kind {
        Baseline::None => vec![0.0; dim],
        Baseline::MeanF => {
            let m = values.iter().sum::<f64>() / values.len() as f64;
            vec![m; dim]
        }
        Baseline::VarianceMinimizing => {
            // Centered at the first value so that a constant `f` gives that
            // constant back exactly.
            let f0 = values[0];
            (0..dim)
                .map(|i| {
                    let (num, den) = scores.iter().zip(values).fold((0.0, 0.0), |(n, d), (s, f)| {
                        let w = s[i] * s[i];
                        (n + w * (f - f0), d + w)
                    });
                    if den > 0.0 {
                        f0 + num / den
                    } else {
                        f0 + values.iter().map(|f| f - f0).sum::<f64>() / values.len() as f64
                    }
                })
                .collect()
        }
    }
}

/// REINFORCE estimate from precomputed objective values `f_m`.
pub fn reinforce_from_values<T: AsRef<[f64]>>(
    proposal: &ProposalParams,
    thetas: &[T],
    values: &[f64],
    baseline: Baseline,
    source: BaselineSource,
) -> Result<GradientEstimate> {
    check_dim("reinforce values", thetas.len(), values.len())?;
    let m = thetas.len();
    if m == 0 {
        return Err(Error::contract("score-function estimate needs a non-empty batch"));
    }
    if m < 2 && baseline == Baseline::VarianceMinimizing {
        return Err(Error::contract(
            "variance-minimizing baseline needs at least two samples",
        ));
    }
    if values.iter().any(|f| !f.is_finite()) {
        return Err(Error::NonFinite("generator objective"));
    }
    let dim = proposal.num_params();
    let scores = thetas
        .iter()
        .map(|t| proposal.score(t.as_ref()))
        .collect::<Result<Vec<_>>>()?;

    let mut grad = vec![0.0; dim];
    let reported_baseline = match source {
        BaselineSource::SameBatch => {
            let b = baseline_from(&scores, values, baseline, dim);
            for (s, f) in scores.iter().zip(values) {
                for i in 0..dim {
                    grad[i] += s[i] * (f - b[i]);
                }
            }
            b
        }
        BaselineSource::SeparateHalf => {
            if m < 2 {
                return Err(Error::contract("separate-half baseline needs at least two samples"));
            }
            let h = m / 2;
            let b_first = baseline_from(&scores[..h], &values[..h], baseline, dim);
            let b_second = baseline_from(&scores[h..], &values[h..], baseline, dim);
            for (j, (s, f)) in scores.iter().zip(values).enumerate() {
                let b = if j < h { &b_second } else { &b_first };
                for i in 0..dim {
                    grad[i] += s[i] * (f - b[i]);
                }
            }
            b_first.iter().zip(&b_second).map(|(a, b)| 0.5 * (a + b)).collect()
        }
    };
    let inv_m = 1.0 / m as f64;
    grad.iter_mut().for_each(|g| *g *= inv_m);
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("proposal gradient"));
    }
    Ok(GradientEstimate {
        grad,
        batch_size: m,
        baseline: reported_baseline,
        objective: values.iter().sum::<f64>() * inv_m,
    })
}

/// Baselined score-function estimate of `grad_psi E[log(1 - d(x))]` from
/// paired parameter draws and simulated data.
pub fn reinforce_grad<T: AsRef<[f64]>, X: AsRef<[f64]>>(
    proposal: &ProposalParams,
    thetas: &[T],
    xs: &[X],
    disc: &Discriminator,
    baseline: Baseline,
    source: BaselineSource,
) -> Result<GradientEstimate> {
    check_dim("reinforce batch", thetas.len(), xs.len())?;
    let values = xs
        .iter()
        .map(|x| generator_value(disc, x.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    reinforce_from_values(proposal, thetas, &values, baseline, source)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorStep {
    pub bce: f64,
    pub r1: f64,
}

/// One RMSProp step on `BCE + r1_coefficient * R1`, real data labeled 1.
pub fn discriminator_update<X: AsRef<[f64]>, Y: AsRef<[f64]>>(
    disc: &mut Discriminator,
    opt: &mut RmsProp,
    real: &[X],
    synthetic: &[Y],
    r1_coefficient: f64,
) -> Result<DiscriminatorStep> {
    if real.len() != synthetic.len() {
        return Err(Error::contract(format!(
            "real ({}) and synthetic ({}) half-batches differ in size",
            real.len(),
            synthetic.len()
        )));
    }
    let batch: Vec<(&[f64], f64)> = real
        .iter()
        .map(|x| (x.as_ref(), 1.0))
        .chain(synthetic.iter().map(|x| (x.as_ref(), 0.0)))
        .collect();
    let (bce, mut grad) = disc.bce_loss_and_grad(&batch)?;
    let (r1, r1_grad) = disc.r1_penalty_and_grad(real)?;
    if r1_coefficient != 0.0 {
        for (g, r) in grad.iter_mut().zip(&r1_grad) {
            *g += r1_coefficient * r;
        }
    }
    let mut params = disc.to_flat();
    opt.step(&mut params, &grad)?;
    disc.set_flat(&params)?;
    Ok(DiscriminatorStep { bce, r1 })
}

/// Draws proposal parameters and simulated data with per-sample streams.
///
/// Sample `n` (counting from zero over the sampler's lifetime) is simulated
/// with stream `n`, so the simulated values do not depend on batching.
#[derive(Debug, Clone)]
pub struct SyntheticSampler {
    theta_rng: SimRng,
    streams: StreamFactory,
    simulations: u64,
    max_consecutive_rejections: usize,
}

impl SyntheticSampler {
    pub fn new(seed: u64, max_consecutive_rejections: usize) -> Self {
        Self {
            theta_rng: seeded(derive_seed(seed, "theta")),
            streams: StreamFactory::new(derive_seed(seed, "simulator")),
            simulations: 0,
            max_consecutive_rejections,
        }
    }

    /// Simulator calls made so far.
    pub fn simulations(&self) -> u64 {
        self.simulations
    }

    /// Draws `n` pairs. Parameters outside the simulator's guard band are
    /// redrawn; too many consecutive rejections abort with
    /// [`Error::Diverged`].
    pub fn draw(
        &mut self,
        proposal: &ProposalParams,
        sim: &dyn Simulator,
        n: usize,
    ) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        check_dim("proposal vs simulator", sim.theta_dim(), proposal.dim())?;
        let mut thetas = Vec::with_capacity(n);
        let mut xs = Vec::with_capacity(n);
        let mut rejections = 0;
        while thetas.len() < n {
            let theta = proposal.sample(&mut self.theta_rng);
            if let Err(e) = sim.check_theta(&theta) {
                rejections += 1;
                if rejections > self.max_consecutive_rejections {
                    return Err(Error::Diverged(format!(
                        "{rejections} consecutive guard-band rejections, last: {e}"
                    )));
                }
                continue;
            }
            rejections = 0;
            let x = sim.sample_unchecked(&theta, &mut self.streams.stream(self.simulations));
            self.simulations += 1;
            thetas.push(theta);
            xs.push(x);
        }
        Ok((thetas, xs))
    }
}

/// One proposal step: simulate `batch_size` pairs, estimate the gradient, add
/// `entropy_coefficient * grad H`, and apply RMSProp.
#[allow(clippy::too_many_arguments)]
pub fn proposal_update(
    proposal: &mut ProposalParams,
    opt: &mut RmsProp,
    disc: &Discriminator,
    sim: &dyn Simulator,
    sampler: &mut SyntheticSampler,
    batch_size: usize,
    entropy_coefficient: f64,
    baseline: Baseline,
    source: BaselineSource,
) -> Result<GradientEstimate> {
    if batch_size < 2 && baseline == Baseline::VarianceMinimizing {
        return Err(Error::contract(
            "variance-minimizing baseline needs a batch of at least two",
        ));
    }
    let (thetas, xs) = sampler.draw(proposal, sim, batch_size)?;
    let estimate = reinforce_grad(proposal, &thetas, &xs, disc, baseline, source)?;
    let mut grad = estimate.grad.clone();
    if entropy_coefficient != 0.0 {
        for (g, h) in grad.iter_mut().zip(proposal.entropy_grad()) {
            *g += entropy_coefficient * h;
        }
    }
    let mut params = proposal.to_flat();
    opt.step(&mut params, &grad)?;
    proposal.set_flat(&params)?;
    proposal.validate()?;
    Ok(estimate)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Cumulative simulator calls.
    pub simulations: u64,
    pub mean: Vec<f64>,
    pub log_scale: Vec<f64>,
    pub discriminator_loss: f64,
    pub r1: f64,
    /// Batch estimate of `E[log(1 - d(x))]`.
    pub generator_objective: f64,
    /// `-log q(theta* | psi)` when the target is known.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub neg_log_q_target: Option<f64>,
    /// `||theta* - E_q[theta]||` when the target is known.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Aborted { iteration: usize, reason: String },
}

impl RunStatus {
    pub fn is_completed(&self) -> bool {
        matches!(self, RunStatus::Completed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub iterations: Vec<IterationRecord>,
    pub simulations: u64,
    pub status: RunStatus,
}

impl RunRecord {
    /// One JSON object per iteration.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for it in &self.iterations {
            serde_json::to_writer(&mut out, it)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.iterations.last()
    }
}

#[derive(Debug, Clone)]
pub struct AvoRun {
    pub proposal: ProposalParams,
    pub discriminator: Discriminator,
    pub record: RunRecord,
}

/// Runs the full training loop for `config.iterations` iterations.
///
/// Configuration and data errors are returned as `Err`. Failures during
/// training (divergence, non-finite gradients) stop the loop and are
/// recorded in the returned [`RunRecord`], together with the last valid
/// parameters.
pub fn run_avo<X: AsRef<[f64]>>(
    config: &AvoConfig,
    sim: &dyn Simulator,
    observed: &[X],
    theta_star: Option<&[f64]>,
) -> Result<AvoRun> {
    config.validate()?;
    if observed.is_empty() {
        return Err(Error::contract("observed data set is empty"));
    }
    for x in observed {
        check_dim("observed data", sim.x_dim(), x.as_ref().len())?;
    }
    if let Some(t) = theta_star {
        check_dim("target parameters", sim.theta_dim(), t.len())?;
    }
    let mut proposal = config
        .initial_proposal
        .clone()
        .unwrap_or_else(|| sim.initial_proposal());
    proposal.validate()?;
    check_dim("initial proposal", sim.theta_dim(), proposal.dim())?;

    let mut init_rng = seeded(derive_seed(config.seed, "discriminator-init"));
    let mut disc = Discriminator::new(sim.x_dim(), &config.hidden_layers, &mut init_rng)?;
    let mut disc_opt = RmsProp::new(disc.num_params(), config.lr_discriminator)?;
    let mut proposal_opt = RmsProp::new(proposal.num_params(), config.lr_proposal)?;
    let mut real_rng = seeded(derive_seed(config.seed, "real-data"));
    let mut sampler = SyntheticSampler::new(config.seed, 10 * config.batch_size);
    let half = config.batch_size / 2;

    let mut iterations = Vec::with_capacity(config.iterations);
    let mut status = RunStatus::Completed;

    for it in 1..=config.iterations {
        let step = (|| -> Result<(DiscriminatorStep, GradientEstimate)> {
            let mut last = DiscriminatorStep { bce: f64::NAN, r1: f64::NAN };
            for _ in 0..config.k {
                let real: Vec<&[f64]> = (0..half)
                    .map(|_| observed[real_rng.random_range(0..observed.len())].as_ref())
                    .collect();
                let (_, synthetic) = sampler.draw(&proposal, sim, half)?;
                last = discriminator_update(
                    &mut disc,
                    &mut disc_opt,
                    &real,
                    &synthetic,
                    config.r1_coefficient,
                )?;
            }
            let estimate = proposal_update(
                &mut proposal,
                &mut proposal_opt,
                &disc,
                sim,
                &mut sampler,
                config.batch_size,
                config.entropy_coefficient,
                config.baseline,
                config.baseline_source,
            )?;
            Ok((last, estimate))
        })();

        match step {
            Ok((d, g)) => {
                let (neg_log_q_target, target_distance) = match theta_star {
                    Some(t) => (
                        Some(-proposal.log_density(t)?),
                        Some(
                            t.iter()
                                .zip(&proposal.mean)
                                .map(|(a, b)| (a - b) * (a - b))
                                .sum::<f64>()
                                .sqrt(),
                        ),
                    ),
                    None => (None, None),
                };
                iterations.push(IterationRecord {
                    iteration: it,
                    simulations: sampler.simulations(),
                    mean: proposal.mean.clone(),
                    log_scale: proposal.log_scale.clone(),
                    discriminator_loss: d.bce,
                    r1: d.r1,
                    generator_objective: g.objective,
                    neg_log_q_target,
                    target_distance,
                });
            }
            Err(e) => {
                status = RunStatus::Aborted {
                    iteration: it,
                    reason: e.to_string(),
                };
                break;
            }
        }
    }

    Ok(AvoRun {
        proposal,
        discriminator: disc,
        record: RunRecord {
            iterations,
            simulations: sampler.simulations(),
            status,
        },
    })
}
