//! Suite configuration, stored as a single JSON file per experiment.

use std::path::Path;

use anyhow::{bail, Context};
use avo_core::abc::AbcConfig;
use avo_core::{AvoConfig, SimulatorKind};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum MethodSpec {
    /// `iterations` is ignored; it is derived from the simulation budget.
    Avo(AvoConfig),
    /// `total_budget` is replaced by the suite budget.
    AbcSmc(AbcConfig),
    AbcRejection(AbcConfig),
}

impl MethodSpec {
    pub fn name(&self) -> &'static str {
        match self {
            MethodSpec::Avo(_) => "avo",
            MethodSpec::AbcSmc(_) => "abc_smc",
            MethodSpec::AbcRejection(_) => "abc_rejection",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub seed: u64,
    pub simulators: Vec<SimulatorKind>,
    pub n_tasks: usize,
    pub observed_count: usize,
    pub simulation_budget: u64,
    pub methods: Vec<MethodSpec>,
    /// Samples drawn at each point estimate for the data-space histogram
    /// comparison.
    pub histogram_samples: usize,
    /// Keep every `trace_stride`-th AVO iteration in the plot traces.
    pub trace_stride: usize,
    /// Write the full per-iteration AVO record and ABC populations of every
    /// cell under `records/`.
    pub write_records: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            simulators: vec![
                SimulatorKind::Poisson,
                SimulatorKind::GaussianToy,
                SimulatorKind::Weinberg,
            ],
            n_tasks: 15,
            observed_count: 100_000,
            simulation_budget: 160_000,
            methods: vec![
                MethodSpec::Avo(AvoConfig {
                    lr_proposal: 5e-3,
                    ..AvoConfig::default()
                }),
                MethodSpec::AbcSmc(AbcConfig::default()),
            ],
            histogram_samples: 100_000,
            trace_stride: 10,
            write_records: true,
        }
    }
}

impl SuiteConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let config: Self =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.simulation_budget == 0 {
            bail!("simulation budget must be positive");
        }
        if self.observed_count == 0 {
            bail!("observed_count must be positive");
        }
        if self.trace_stride == 0 {
            bail!("trace_stride must be positive");
        }
        let mut names: Vec<&str> = self.methods.iter().map(MethodSpec::name).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            bail!("each method may appear at most once per suite");
        }
        for m in &self.methods {
            match m {
                MethodSpec::Avo(c) => c.validate()?,
                MethodSpec::AbcSmc(c) | MethodSpec::AbcRejection(c) => AbcConfig {
                    total_budget: self.simulation_budget,
                    ..c.clone()
                }
                .validate()?,
            }
        }
        Ok(())
    }
}
