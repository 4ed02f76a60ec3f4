use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lgg::harness::config::ExperimentConfig;
use lgg::harness::run::{run_distill, run_evaluate, run_gradcheck_command, run_graph_inspect, run_train};
use lgg::{Error, Result};

#[derive(Parser)]
#[command(name = "lgg", version, about = "Latent geometry graph experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network with the configured objective.
    Train(Common),
    /// Train a student against a teacher's latent graphs.
    Distill(Common),
    /// Clean, adversarial and corruption error of trained weights.
    Evaluate(Common),
    /// Dump per-layer graphs, eigenmaps and label variation.
    GraphInspect(Common),
    /// Finite-difference check of every objective's gradient.
    Gradcheck(Common),
}

#[derive(Args)]
struct Common {
    /// Configuration file (`section.key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `run.out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn execute(cli: Cli) -> Result<()> {
    let (run, common): (fn(&ExperimentConfig, &str) -> Result<_>, Common) = match cli.command {
        Command::Train(c) => (run_train, c),
        Command::Distill(c) => (run_distill, c),
        Command::Evaluate(c) => (run_evaluate, c),
        Command::GraphInspect(c) => (run_graph_inspect, c),
        Command::Gradcheck(c) => (run_gradcheck_command, c),
    };
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", common.config.display())))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = common.out {
        cfg.out = out;
    }
    run(&cfg, &text)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
