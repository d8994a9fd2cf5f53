//! Result files: JSON-lines records, CSV summaries and plot data.
//!
//! Layout under the output directory:
//!
//! ```text
//! tasks.json            task list
//! results.jsonl         one BenchmarkResult per cell
//! details.jsonl         traces and histograms per cell
//! timings.jsonl         wall-clock seconds per cell (not deterministic)
//! summary.csv           squared error per task and method
//! summary_methods.csv   median and quartiles per simulator and method
//! plot/boxplot.csv      box-plot statistics per simulator and method
//! plot/traces.csv       -log q(theta*) and ||theta* - E[theta]|| vs simulations
//! plot/histograms.csv   p(x | theta_hat) next to the observed histogram
//! records/              full per-cell records, when enabled
//! ```

use std::path::Path;

use serde::Serialize;

use crate::suite::{read_jsonl, write_jsonl, BenchmarkResult, CellDetail, CellStatus, SuiteOutput};

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub simulator: String,
    pub method: String,
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Squared-error statistics per (simulator, method), in first-seen order.
/// Cells without a point estimate are left out.
pub fn method_summaries(results: &[BenchmarkResult]) -> Vec<MethodSummary> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in results {
        let k = (r.simulator.to_string(), r.method.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .filter_map(|(simulator, method)| {
            let mut errors: Vec<f64> = results
                .iter()
                .filter(|r| r.simulator.as_str() == simulator && r.method == method)
                .filter_map(|r| r.squared_error)
                .collect();
            if errors.is_empty() {
                return None;
            }
            errors.sort_by(|a, b| a.total_cmp(b));
            Some(MethodSummary {
                n: errors.len(),
                min: errors[0],
                q1: quantile(&errors, 0.25),
                median: quantile(&errors, 0.5),
                q3: quantile(&errors, 0.75),
                max: *errors.last().unwrap(),
                simulator,
                method,
            })
        })
        .collect()
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    simulator: &'a str,
    task_id: &'a str,
    method: &'a str,
    squared_error: Option<f64>,
    histogram_distance: Option<f64>,
    simulations: u64,
    budget: u64,
    status: CellStatus,
}

#[derive(Serialize)]
struct TraceRow<'a> {
    simulator: &'a str,
    task_id: &'a str,
    method: &'a str,
    step: usize,
    simulations: u64,
    neg_log_q: Option<f64>,
    target_distance: f64,
}

#[derive(Serialize)]
struct HistogramRow<'a> {
    simulator: &'a str,
    task_id: &'a str,
    method: &'a str,
    dim: usize,
    slot: usize,
    lo: Option<f64>,
    hi: Option<f64>,
    model: f64,
    observed: f64,
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>, header: &[&str]) -> anyhow::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// `summary.csv` and `summary_methods.csv`.
pub fn write_summaries(dir: &Path, results: &[BenchmarkResult]) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)?;
    write_csv(
        &dir.join("summary.csv"),
        results.iter().map(|r| SummaryRow {
            simulator: r.simulator.as_str(),
            task_id: &r.task_id,
            method: &r.method,
            squared_error: r.squared_error,
            histogram_distance: r.histogram_distance,
            simulations: r.simulations,
            budget: r.budget,
            status: r.status,
        }),
        &[
            "simulator",
            "task_id",
            "method",
            "squared_error",
            "histogram_distance",
            "simulations",
            "budget",
            "status",
        ],
    )?;
    write_csv(
        &dir.join("summary_methods.csv"),
        method_summaries(results),
        &["simulator", "method", "n", "min", "q1", "median", "q3", "max"],
    )
}

/// Everything under `plot/`.
pub fn write_plot_data(dir: &Path, results: &[BenchmarkResult], details: &[CellDetail]) -> anyhow::Result<()> {
    let plot = dir.join("plot");
    std::fs::create_dir_all(&plot)?;
    write_csv(
        &plot.join("boxplot.csv"),
        method_summaries(results),
        &["simulator", "method", "n", "min", "q1", "median", "q3", "max"],
    )?;
    write_csv(
        &plot.join("traces.csv"),
        details.iter().flat_map(|d| {
            d.trace.iter().map(move |t| TraceRow {
                simulator: d.simulator.as_str(),
                task_id: &d.task_id,
                method: &d.method,
                step: t.step,
                simulations: t.simulations,
                neg_log_q: t.neg_log_q,
                target_distance: t.target_distance,
            })
        }),
        &[
            "simulator",
            "task_id",
            "method",
            "step",
            "simulations",
            "neg_log_q",
            "target_distance",
        ],
    )?;
    write_csv(
        &plot.join("histograms.csv"),
        details.iter().flat_map(|d| {
            d.histogram.iter().map(move |h| HistogramRow {
                simulator: d.simulator.as_str(),
                task_id: &d.task_id,
                method: &d.method,
                dim: h.dim,
                slot: h.slot,
                lo: h.lo,
                hi: h.hi,
                model: h.model,
                observed: h.observed,
            })
        }),
        &[
            "simulator",
            "task_id",
            "method",
            "dim",
            "slot",
            "lo",
            "hi",
            "model",
            "observed",
        ],
    )
}

/// Writes every output file of a finished suite.
pub fn write_outputs(dir: &Path, output: &SuiteOutput) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("tasks.json"), serde_json::to_string_pretty(&output.tasks)? + "\n")?;
    write_jsonl(&dir.join("results.jsonl"), &output.results)?;
    write_jsonl(&dir.join("details.jsonl"), &output.details)?;
    write_jsonl(&dir.join("timings.jsonl"), &output.timings)?;
    write_summaries(dir, &output.results)?;
    write_plot_data(dir, &output.results, &output.details)
}

pub fn read_results(path: &Path) -> anyhow::Result<Vec<BenchmarkResult>> {
    read_jsonl(path)
}

pub fn read_details(path: &Path) -> anyhow::Result<Vec<CellDetail>> {
    read_jsonl(path)
}
