use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use avo_cli::report::{read_details, read_results, write_outputs, write_plot_data, write_summaries};
use avo_cli::suite::suite_tasks;
use avo_cli::tasks::write_observed;
use avo_cli::{run_suite, SuiteConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "avo", version, about = "Adversarial variational optimization benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write observed data sets and task descriptions.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "data")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run every task and method in a suite.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; defaults to the number of cores.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Rebuild the CSV summaries from results.jsonl.
    Summarize {
        #[arg(long, default_value = "results")]
        dir: PathBuf,
    },
    /// Rebuild plot/*.csv from results.jsonl and details.jsonl.
    PlotData {
        #[arg(long, default_value = "results")]
        dir: PathBuf,
    },
    /// Print the default suite configuration.
    DefaultConfig,
}

fn load(config: &PathBuf, seed: Option<u64>) -> anyhow::Result<SuiteConfig> {
    let mut c = SuiteConfig::load(config)?;
    if let Some(s) = seed {
        c.seed = s;
    }
    Ok(c)
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::GenData { config, out, seed } => {
            let c = load(&config, seed)?;
            for task in suite_tasks(&c) {
                write_observed(&task, &out)?;
                log::info!("wrote {}", task.id);
            }
        }
        Command::Run {
            config,
            out,
            seed,
            threads,
        } => {
            let c = load(&config, seed)?;
            if let Some(n) = threads {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .context("configuring the thread pool")?;
            }
            let records = c.write_records.then(|| out.join("records"));
            let output = run_suite(&c, records.as_deref())?;
            write_outputs(&out, &output)?;
            let aborted: Vec<_> = output
                .results
                .iter()
                .filter(|r| r.status == avo_cli::CellStatus::Aborted)
                .collect();
            for r in &aborted {
                log::error!("{} {} aborted: {}", r.task_id, r.method, r.message.as_deref().unwrap_or(""));
            }
            println!(
                "{} cells, {} aborted; results in {}",
                output.results.len(),
                aborted.len(),
                out.display()
            );
            return Ok(aborted.is_empty());
        }
        Command::Summarize { dir } => {
            let results = read_results(&dir.join("results.jsonl"))?;
            write_summaries(&dir, &results)?;
        }
        Command::PlotData { dir } => {
            let results = read_results(&dir.join("results.jsonl"))?;
            let details = read_details(&dir.join("details.jsonl"))?;
            write_plot_data(&dir, &results, &details)?;
        }
        Command::DefaultConfig => {
            println!("{}", serde_json::to_string_pretty(&SuiteConfig::default())?);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
