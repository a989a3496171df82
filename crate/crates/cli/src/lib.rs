//! Command-line front end: experiment configs, subcommands and report files.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use cmjvax::ingest::{FilterOptions, DEFAULT_GAP_LIMIT};

pub use commands::RunOptions;
pub use config::ExperimentConfig;
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "cmjvax", version, about = "Branching-process outbreaks under time-dependent vaccination")]
pub struct Cli {
    /// Master seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for replicate simulation. Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate unvaccinated trees and summarize each replicate.
    Simulate { config: PathBuf },
    /// Coupled distributions of a functional under each configured policy.
    Estimate { config: PathBuf },
    /// Smallest policy of a family meeting a quantile or mean bound.
    Optimize { config: PathBuf },
    /// Offspring-mean MLE and fitted Borel-Tanner law from an `a,n` CSV.
    Infer {
        sizes: PathBuf,
        /// Initial count used for the printed pmf table.
        #[arg(long, default_value_t = 1)]
        a: u64,
    },
    /// Segment weekly `province,week,cases` counts into outbreaks.
    Ingest {
        cases: PathBuf,
        #[arg(long, default_value_t = DEFAULT_GAP_LIMIT)]
        gap_limit: u32,
        /// Keep outbreaks whose first week has this many cases.
        #[arg(long, default_value_t = 1)]
        initial_cases: u64,
        /// Keep outbreaks lasting at most this many weeks.
        #[arg(long, default_value_t = 9)]
        max_duration: u64,
        /// Keep every outbreak.
        #[arg(long)]
        no_filter: bool,
    },
    /// Gamma probability of an incubation period inside [lo, hi].
    Coverage { mean: f64, shape: f64, lo: f64, hi: f64 },
}

/// Runs one subcommand and returns the text report meant for stdout.
pub fn run(cli: Cli) -> Result<String> {
    let opts = RunOptions { seed: cli.seed, threads: cli.threads, out: cli.out };
    match cli.command {
        Command::Simulate { config } => commands::simulate(&config, &opts),
        Command::Estimate { config } => commands::estimate(&config, &opts),
        Command::Optimize { config } => commands::optimize(&config, &opts),
        Command::Infer { sizes, a } => commands::infer(&sizes, a, &opts),
        Command::Ingest { cases, gap_limit, initial_cases, max_duration, no_filter } => {
            let filter = if no_filter {
                FilterOptions { initial_cases: None, max_duration_weeks: None }
            } else {
                FilterOptions { initial_cases: Some(initial_cases), max_duration_weeks: Some(max_duration) }
            };
            commands::ingest(&cases, commands::IngestOptions { gap_limit, filter }, &opts)
        }
        Command::Coverage { mean, shape, lo, hi } => {
            Ok(format!("{}\n", commands::coverage(mean, shape, lo, hi)?))
        }
    }
}
