//! `kep`: generate pools, build compatibility graphs, simulate a kidney
//! exchange over time, search equity weights and report.

mod commands;
mod config;
mod failure;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ExperimentConfig, Overrides};
use failure::Outcome;

#[derive(Parser)]
#[command(name = "kep", version, about = "Kidney exchange simulation-optimization experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// antigen, allele or eplet.
    #[arg(long, global = true)]
    paradigm: Option<String>,
    /// full, bdrdq or drdq.
    #[arg(long, global = true)]
    loci: Option<String>,
    #[arg(long, global = true)]
    replications: Option<usize>,
    /// Worker threads for replications (default: available cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a population, pair it and assign arrival times; writes pool.json.
    GeneratePool,
    /// Build the compatibility graph of the pool; writes graph.json.
    BuildGraph,
    /// Run the replication batch; writes per-replication CSVs and summary.json.
    Simulate,
    /// Rawlsian weight search; writes search_trace.csv and weights.json.
    EquitySearch,
    /// Per-arc scores under all paradigms; writes correlation.csv.
    FigData,
    /// Table of a simulation summary; writes report.md and prints it.
    Report {
        /// Summary to render (default `<out>/summary.json`).
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Write the bundled synthetic HLA tables and an example config.
    ExampleData {
        /// Use the two-group catalogue with a minority disadvantage.
        #[arg(long)]
        two_group: bool,
    },
}

fn run(cli: Cli) -> Outcome<PathBuf> {
    let c = cli.common;
    let overrides = Overrides {
        seed: c.seed,
        out: c.out,
        paradigm: c.paradigm,
        loci: c.loci,
        replications: c.replications,
        workers: c.workers,
    };
    let cfg = ExperimentConfig::load(c.config.as_deref(), &overrides)?;
    match cli.command {
        Command::GeneratePool => commands::generate_pool(&cfg),
        Command::BuildGraph => commands::build_graph_cmd(&cfg),
        Command::Simulate => commands::simulate(&cfg),
        Command::EquitySearch => commands::equity_search(&cfg),
        Command::FigData => commands::fig_data(&cfg),
        Command::Report { summary } => commands::report(&cfg, summary.as_deref()),
        Command::ExampleData { two_group } => commands::example_data(&cfg, two_group),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(manifest) => {
            eprintln!("wrote {}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(failure) => {
            eprintln!("{}", failure.to_json());
            ExitCode::from(failure.exit_code())
        }
    }
}
