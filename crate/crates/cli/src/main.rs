use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mbcl_cli::{run_experiment, CliResult, Experiment, ExperimentConfig};

#[derive(Parser)]
#[command(name = "mbcl", version, about = "Mini-batch contrastive learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize random embeddings and record the loss trace and Gram matrices.
    Synthetic(Common),
    /// Run the four-point toy study with OSGD, SGD and all-batch GD.
    Toy(Common),
    /// Partition random embeddings into batches with the configured selector.
    SelectBatches(Common),
    /// Compare batch-loss histograms of a selector against a random partition.
    Histogram(Common),
    /// Run the property battery.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// Config file; built-in defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run this single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Suppress progress output.
    #[arg(long)]
    quiet: bool,
}

fn execute(experiment: Experiment, common: &Common) -> CliResult<()> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    let quiet = common.quiet;
    run_experiment(&cfg, experiment, &mut |line| {
        if !quiet {
            println!("{line}");
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, common) = match &cli.command {
        Command::Synthetic(c) => (Experiment::Synthetic, c),
        Command::Toy(c) => (Experiment::Toy, c),
        Command::SelectBatches(c) => (Experiment::SelectBatches, c),
        Command::Histogram(c) => (Experiment::Histogram, c),
        Command::Verify(c) => (Experiment::Verify, c),
    };
    match execute(experiment, common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mbcl: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
