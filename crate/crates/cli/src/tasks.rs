//! Benchmark tasks: target parameters drawn from a simulator's prior box,
//! each with its own observed data set.

use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use avo_core::rng::{derive_seed, seeded};
use avo_core::simulators::simulate_n;
use avo_core::SimulatorKind;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTask {
    /// `<simulator>-<index>`, e.g. `poisson-03`.
    pub id: String,
    pub simulator: SimulatorKind,
    pub index: usize,
    pub theta_star: Vec<f64>,
    pub observed_count: usize,
    pub simulation_budget: u64,
    pub seed: u64,
}

impl BenchmarkTask {
    /// Observed data at `theta_star`, regenerated deterministically from the
    /// task seed.
    pub fn observed_data(&self) -> avo_core::Result<Vec<Vec<f64>>> {
        let sim = self.simulator.build();
        let mut rng = seeded(derive_seed(self.seed, "observed"));
        simulate_n(sim.as_ref(), &self.theta_star, self.observed_count, &mut rng)
    }
}

/// `n_tasks` i.i.d. uniform draws from the simulator's prior box.
pub fn make_tasks(
    simulator: SimulatorKind,
    n_tasks: usize,
    seed: u64,
    observed_count: usize,
    simulation_budget: u64,
) -> Vec<BenchmarkTask> {
    let prior = simulator.build().prior_box();
    let mut rng = seeded(derive_seed(seed, &format!("tasks/{simulator}")));
    (0..n_tasks)
        .map(|index| {
            let theta_star = prior.iter().map(|(lo, hi)| rng.random_range(*lo..*hi)).collect();
            let id = format!("{simulator}-{index:02}");
            BenchmarkTask {
                seed: derive_seed(seed, &id),
                id,
                simulator,
                index,
                theta_star,
                observed_count,
                simulation_budget,
            }
        })
        .collect()
}

/// Writes `<dir>/<task>.txt` (one observation per line, whitespace
/// separated) and `<dir>/<task>.json` describing the task.
pub fn write_observed(task: &BenchmarkTask, dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)?;
    let data = task.observed_data()?;
    let path = dir.join(format!("{}.txt", task.id));
    let mut out = BufWriter::new(
        std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?,
    );
    for x in &data {
        let line: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    out.flush()?;
    let meta = std::fs::File::create(dir.join(format!("{}.json", task.id)))?;
    serde_json::to_writer_pretty(meta, task)?;
    Ok(())
}
