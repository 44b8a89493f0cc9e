use std::path::PathBuf;

use clap::{Parser, Subcommand};
use contramap_cli::{cmd_bench, cmd_eval, cmd_map, cmd_train, CliError, RunConfig};

#[derive(Parser)]
#[command(name = "contramap", version, about = "Contrastive-noise occupancy and semantic maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON run-config.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `outdir` from the config.
    #[arg(long)]
    outdir: Option<PathBuf>,
    /// Overrides the run seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write model.json, model.bin, loss.csv, resolved-config.json.
    Train(Common),
    /// Score the trained model; writes report.json.
    Eval(Common),
    /// Render rasters, slices or a mesh of the trained model.
    Map(Common),
    /// Train-time scaling sweep over hinge counts.
    Bench(Common),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (Command::Train(c) | Command::Eval(c) | Command::Map(c) | Command::Bench(c)) = &cli.command;
    let cfg = RunConfig::load(&c.config, c.outdir.clone(), c.seed)?;
    match cli.command {
        Command::Train(_) => cmd_train(&cfg).map(drop),
        Command::Eval(_) => cmd_eval(&cfg).map(drop),
        Command::Map(_) => cmd_map(&cfg).map(drop),
        Command::Bench(_) => cmd_bench(&cfg).map(drop),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        log::error!("{e}");
        std::process::exit(e.code as i32);
    }
}
