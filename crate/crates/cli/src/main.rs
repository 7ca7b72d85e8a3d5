//! `eclipsenet`: mascons, datasets, training, evaluation, propagation,
//! trajectory comparison and timing from one configuration file.

// `!(x > 0.0)` guards deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{load_config, RunConfig};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "eclipsenet",
    version,
    about = "Eclipse modelling and propagation around small bodies"
)]
struct Cli {
    /// TOML configuration file.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration value, e.g. `--set train.epochs=10`.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Voxel mascon model of the body mesh.
    Mascons,
    /// Training and validation datasets.
    Dataset,
    /// Train a network; writes the model and its loss history.
    Train,
    /// Mean squared error of a model on one dataset split.
    Eval {
        /// Also sample network and ground-truth F on a plane grid.
        #[arg(long)]
        silhouette: bool,
    },
    /// Propagate one trajectory.
    Propagate,
    /// Propagate with both eclipse sources and write their divergence.
    Compare,
    /// Time indicator evaluations of each eclipse source.
    Bench,
    /// Write a built-in test body as an OBJ file.
    SynthMesh {
        /// `cube`, `icosphere` or `bilobed`.
        #[arg(long, default_value = "bilobed")]
        shape: String,
        #[arg(long, default_value_t = 4)]
        subdivisions: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?,
        None => String::new(),
    };
    let cfg: RunConfig = load_config(&text, &cli.overrides)?;
    match cli.command {
        Command::Mascons => commands::mascons(&cfg),
        Command::Dataset => commands::dataset(&cfg),
        Command::Train => commands::train(&cfg),
        Command::Eval { silhouette } => commands::eval(&cfg, silhouette),
        Command::Propagate => commands::propagate(&cfg),
        Command::Compare => commands::compare(&cfg),
        Command::Bench => commands::bench(&cfg),
        Command::SynthMesh {
            shape,
            subdivisions,
            seed,
            output,
        } => commands::synth_mesh(&cfg, &shape, subdivisions, seed, &output),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code())
        }
    }
}
