//! Benchmark harness: builds tasks from simulator priors, runs AVO and ABC
//! cells under a shared simulation budget, and writes machine-readable
//! results and plot data.

pub mod config;
pub mod report;
pub mod suite;
pub mod tasks;

pub use config::{MethodSpec, SuiteConfig};
pub use suite::{run_cell, run_suite, BenchmarkResult, CellDetail, CellStatus, SuiteOutput};
pub use tasks::{make_tasks, BenchmarkTask};
