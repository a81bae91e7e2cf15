//! `gradlens`: simulate gradient-leakage attacks on federated learning
//! and the augmentation defense, from config files to CSV/image reports.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gradlens::commands::{cmd_attack, cmd_gallery, cmd_sweep, cmd_utility};
use gradlens::config::{load_config, ExperimentConfig, Overrides};
use gradlens_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "gradlens",
    version,
    about = "Gradient-leakage attacks on federated learning, and the augmentation defense"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one federated round under an attack and score reconstructions.
    Attack(RunArgs),
    /// Run the attack over a batch-size x neuron grid with seeded trials.
    Sweep(RunArgs),
    /// Train under every augmentation suite and compare test accuracy.
    Utility(RunArgs),
    /// Render pair images and an SVG contact sheet from an attack run.
    Gallery(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config file (see README for the format).
    #[arg(long)]
    config: PathBuf,
    /// Override [run] seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override [run] out.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override [attack] kind: imprint | trap | linear | none.
    #[arg(long)]
    attack: Option<String>,
    /// Override [defense] suite.
    #[arg(long)]
    defense: Option<String>,
    /// Override [round] batch_size.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Override [attack] neurons.
    #[arg(long)]
    neurons: Option<usize>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            out: self.out.clone(),
            attack: self.attack.clone(),
            defense: self.defense.clone(),
            batch_size: self.batch_size,
            neurons: self.neurons,
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let (args, command): (&RunArgs, fn(&ExperimentConfig) -> Result<()>) = match &cli.command {
        Command::Attack(args) => (args, cmd_attack),
        Command::Sweep(args) => (args, cmd_sweep),
        Command::Utility(args) => (args, cmd_utility),
        Command::Gallery(args) => (args, cmd_gallery),
    };
    let cfg = load_config(&args.config, &args.overrides())?;
    command(&cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gradlens: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
