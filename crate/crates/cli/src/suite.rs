//! Runs every (task, method) cell of a suite under a shared simulation
//! budget.
//!
//! Cells are independent. Each one derives its randomness from the task seed
//! and the method name, so parallel and serial execution give identical
//! results. A failing cell is recorded with its status and never stops the
//! suite.

use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use avo_core::abc::{abc_rejection, abc_smc, AbcConfig, AbcResult};
use avo_core::histogram::{l2_distance, HistogramSpec};
use avo_core::rng::{derive_seed, seeded};
use avo_core::simulators::simulate_n;
use avo_core::{run_avo, AvoConfig, AvoRun, ProposalParams, Simulator, SimulatorKind};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{MethodSpec, SuiteConfig};
use crate::tasks::{make_tasks, BenchmarkTask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Completed,
    /// The method ran out of budget before producing a full population.
    Partial,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub task_id: String,
    pub simulator: SimulatorKind,
    pub method: String,
    pub theta_star: Vec<f64>,
    pub theta_hat: Option<Vec<f64>>,
    /// Point estimate in reporting units, e.g. `lambda` next to `log_lambda`.
    pub reported: Vec<(String, f64)>,
    pub squared_error: Option<f64>,
    pub simulations: u64,
    pub budget: u64,
    pub status: CellStatus,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub message: Option<String>,
    /// Distance between the histograms of `p(x | theta_hat)` and the observed
    /// data.
    pub histogram_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    /// AVO iteration or ABC generation.
    pub step: usize,
    pub simulations: u64,
    /// `-log q(theta* | psi)`; AVO only.
    pub neg_log_q: Option<f64>,
    /// `||theta* - E[theta]||` under the proposal or weighted population.
    pub target_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub dim: usize,
    /// Position in `[underflow, bins.., overflow]`.
    pub slot: usize,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub model: f64,
    pub observed: f64,
}

/// Plot data for one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDetail {
    pub task_id: String,
    pub simulator: SimulatorKind,
    pub method: String,
    pub trace: Vec<TracePoint>,
    pub histogram: Vec<HistogramBin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub task_id: String,
    pub method: String,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SuiteOutput {
    pub tasks: Vec<BenchmarkTask>,
    pub results: Vec<BenchmarkResult>,
    pub details: Vec<CellDetail>,
    pub timings: Vec<Timing>,
}

impl SuiteOutput {
    pub fn any_aborted(&self) -> bool {
        self.results.iter().any(|r| r.status == CellStatus::Aborted)
    }
}

pub fn suite_tasks(config: &SuiteConfig) -> Vec<BenchmarkTask> {
    config
        .simulators
        .iter()
        .flat_map(|&s| {
            make_tasks(
                s,
                config.n_tasks,
                config.seed,
                config.observed_count,
                config.simulation_budget,
            )
        })
        .collect()
}

/// The mode of a Gaussian proposal, which is its mean.
pub fn point_estimate_avo(proposal: &ProposalParams) -> Vec<f64> {
    proposal.mode().to_vec()
}

fn squared_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn weighted_mean(particles: &[avo_core::abc::Particle], dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|i| particles.iter().map(|p| p.weight * p.theta[i]).sum())
        .collect()
}

fn edge_bins(spec: &HistogramSpec, model: &[f64], observed: &[f64]) -> Vec<HistogramBin> {
    let mut out = Vec::with_capacity(model.len());
    let mut off = 0;
    for (dim, binning) in spec.dims.iter().enumerate() {
        let edges: Vec<(f64, f64)> = binning.edges();
        let n = binning.num_bins();
        for slot in 0..n + 2 {
            let (lo, hi) = match slot {
                0 => (None, edges.first().map(|e| e.0)),
                s if s == n + 1 => (edges.last().map(|e| e.1), None),
                s => (Some(edges[s - 1].0), Some(edges[s - 1].1)),
            };
            out.push(HistogramBin {
                dim,
                slot,
                lo,
                hi,
                model: model[off + slot],
                observed: observed[off + slot],
            });
        }
        off += n + 2;
    }
    out
}

/// Everything a method run produces before the common post-processing.
struct MethodOutcome {
    theta_hat: Option<Vec<f64>>,
    simulations: u64,
    status: CellStatus,
    message: Option<String>,
    trace: Vec<TracePoint>,
    record: Option<Vec<u8>>,
}

fn run_avo_cell(
    task: &BenchmarkTask,
    sim: &dyn Simulator,
    observed: &[Vec<f64>],
    base: &AvoConfig,
    seed: u64,
    config: &SuiteConfig,
) -> MethodOutcome {
    let avo_config = AvoConfig {
        iterations: base.iterations_for_budget(task.simulation_budget),
        seed,
        ..base.clone()
    };
    match run_avo(&avo_config, sim, observed, Some(&task.theta_star)) {
        Ok(AvoRun { proposal, record, .. }) => {
            let trace = record
                .iterations
                .iter()
                .filter(|it| it.iteration % config.trace_stride == 0 || it.iteration == 1)
                .map(|it| TracePoint {
                    step: it.iteration,
                    simulations: it.simulations,
                    neg_log_q: it.neg_log_q_target,
                    target_distance: it.target_distance.unwrap_or(f64::NAN),
                })
                .collect();
            let (status, message) = match &record.status {
                avo_core::RunStatus::Completed => (CellStatus::Completed, None),
                avo_core::RunStatus::Aborted { iteration, reason } => (
                    CellStatus::Aborted,
                    Some(format!("aborted at iteration {iteration}: {reason}")),
                ),
            };
            let bytes = config.write_records.then(|| {
                let mut buf = Vec::new();
                record.write_jsonl(&mut buf).map(|_| buf).ok()
            });
            MethodOutcome {
                theta_hat: Some(point_estimate_avo(&proposal)),
                simulations: record.simulations,
                status,
                message,
                trace,
                record: bytes.flatten(),
            }
        }
        Err(e) => aborted(e),
    }
}

fn aborted(e: impl std::fmt::Display) -> MethodOutcome {
    MethodOutcome {
        theta_hat: None,
        simulations: 0,
        status: CellStatus::Aborted,
        message: Some(e.to_string()),
        trace: Vec::new(),
        record: None,
    }
}

fn abc_outcome(task: &BenchmarkTask, result: AbcResult, write_records: bool) -> MethodOutcome {
    let dim = task.theta_star.len();
    let trace = result
        .populations
        .iter()
        .zip(&result.generation_simulations)
        .enumerate()
        .map(|(g, (pop, &sims))| TracePoint {
            step: g,
            simulations: sims,
            neg_log_q: None,
            target_distance: squared_error(&task.theta_star, &weighted_mean(pop, dim)).sqrt(),
        })
        .collect();
    let bytes = write_records.then(|| {
        let mut buf = Vec::new();
        result.write_jsonl(&mut buf).map(|_| buf).ok()
    });
    MethodOutcome {
        theta_hat: Some(result.point_estimate),
        simulations: result.simulations,
        status: if result.partial {
            CellStatus::Partial
        } else {
            CellStatus::Completed
        },
        message: result.stop_reason,
        trace,
        record: bytes.flatten(),
    }
}

/// Runs one cell. The optional byte buffer is the cell's full record
/// (JSON-lines).
pub fn run_cell(
    task: &BenchmarkTask,
    observed: &[Vec<f64>],
    method: &MethodSpec,
    config: &SuiteConfig,
) -> (BenchmarkResult, CellDetail, Option<Vec<u8>>) {
    let sim = task.simulator.build();
    let sim = sim.as_ref();
    let seed = derive_seed(task.seed, method.name());
    let spec = sim.histogram_spec(observed);
    let observed_hist = spec.histogram(observed);

    let outcome = match method {
        MethodSpec::Avo(c) => run_avo_cell(task, sim, observed, c, seed, config),
        MethodSpec::AbcSmc(c) | MethodSpec::AbcRejection(c) => {
            let abc_config = AbcConfig {
                total_budget: task.simulation_budget,
                ..c.clone()
            };
            let run = if matches!(method, MethodSpec::AbcSmc(_)) {
                abc_smc(&abc_config, sim, &observed_hist, &spec, seed)
            } else {
                abc_rejection(&abc_config, sim, &observed_hist, &spec, seed)
            };
            match run {
                Ok(r) => abc_outcome(task, r, config.write_records),
                Err(e) => aborted(e),
            }
        }
    };

    // Diagnostic simulations at the estimate; not charged to the budget.
    let mut histogram = Vec::new();
    let mut histogram_distance = None;
    if let Some(theta_hat) = &outcome.theta_hat {
        let mut rng = seeded(derive_seed(seed, "histogram"));
        if let Ok(xs) = simulate_n(sim, theta_hat, config.histogram_samples, &mut rng) {
            let model = spec.histogram(&xs);
            histogram_distance = Some(l2_distance(&model, &observed_hist));
            histogram = edge_bins(&spec, &model, &observed_hist);
        }
    }

    let result = BenchmarkResult {
        task_id: task.id.clone(),
        simulator: task.simulator,
        method: method.name().to_string(),
        theta_star: task.theta_star.clone(),
        reported: outcome
            .theta_hat
            .as_ref()
            .map(|t| sim.report(t))
            .unwrap_or_default(),
        squared_error: outcome.theta_hat.as_ref().map(|t| squared_error(&task.theta_star, t)),
        theta_hat: outcome.theta_hat,
        simulations: outcome.simulations,
        budget: task.simulation_budget,
        status: outcome.status,
        message: outcome.message,
        histogram_distance,
    };
    let detail = CellDetail {
        task_id: task.id.clone(),
        simulator: task.simulator,
        method: method.name().to_string(),
        trace: outcome.trace,
        histogram,
    };
    (result, detail, outcome.record)
}

/// Runs the whole suite. Full per-cell records go to `<out>/records/` when
/// `records_dir` is given and the config asks for them.
pub fn run_suite(config: &SuiteConfig, records_dir: Option<&Path>) -> anyhow::Result<SuiteOutput> {
    config.validate()?;
    let tasks = suite_tasks(config);
    if let Some(dir) = records_dir {
        std::fs::create_dir_all(dir)?;
    }
    let cells: Vec<anyhow::Result<Vec<(BenchmarkResult, CellDetail, Timing)>>> = tasks
        .par_iter()
        .map(|task| {
            let observed = match task.observed_data() {
                Ok(o) => o,
                Err(e) => {
                    return Ok(config
                        .methods
                        .iter()
                        .map(|m| failed_cell(task, m, &e))
                        .collect())
                }
            };
            config
                .methods
                .par_iter()
                .map(|m| {
                    let start = Instant::now();
                    let (result, detail, record) = run_cell(task, &observed, m, config);
                    let timing = Timing {
                        task_id: task.id.clone(),
                        method: m.name().to_string(),
                        wall_seconds: start.elapsed().as_secs_f64(),
                    };
                    log::info!(
                        "{} {}: {:?}, squared error {:?}",
                        task.id,
                        m.name(),
                        result.status,
                        result.squared_error
                    );
                    if let (Some(dir), Some(bytes)) = (records_dir, record) {
                        let path = dir.join(format!("{}__{}.jsonl", task.id, m.name()));
                        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
                    }
                    Ok((result, detail, timing))
                })
                .collect()
        })
        .collect();

    let mut output = SuiteOutput {
        tasks,
        ..SuiteOutput::default()
    };
    for cell in cells {
        for (r, d, t) in cell? {
            output.results.push(r);
            output.details.push(d);
            output.timings.push(t);
        }
    }
    Ok(output)
}

fn failed_cell(
    task: &BenchmarkTask,
    method: &MethodSpec,
    e: &avo_core::Error,
) -> (BenchmarkResult, CellDetail, Timing) {
    (
        BenchmarkResult {
            task_id: task.id.clone(),
            simulator: task.simulator,
            method: method.name().to_string(),
            theta_star: task.theta_star.clone(),
            theta_hat: None,
            reported: Vec::new(),
            squared_error: None,
            simulations: 0,
            budget: task.simulation_budget,
            status: CellStatus::Aborted,
            message: Some(e.to_string()),
            histogram_distance: None,
        },
        CellDetail {
            task_id: task.id.clone(),
            simulator: task.simulator,
            method: method.name().to_string(),
            trace: Vec::new(),
            histogram: Vec::new(),
        },
        Timing {
            task_id: task.id.clone(),
            method: method.name().to_string(),
            wall_seconds: 0.0,
        },
    )
}

pub(crate) fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> anyhow::Result<()> {
    let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub(crate) fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<Vec<T>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{} line {}", path.display(), i + 1)))
        .collect()
}
