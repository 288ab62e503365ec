//! Batch CLI binding the toolkit together: train, reconstruct,
//! interpolate, sample, eval. One command per process; every output
//! directory receives a manifest sufficient to rerun the command.

mod commands;
mod common;

use clap::{Args, Parser, Subcommand};
use common::CommonArgs;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "hourglass", version, about = "Equivariant protein fragment autoencoder and latent diffusion toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SharedFlags {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dotted-path config override KEY=VALUE (repeatable).
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Atom mode: all-atom or backbone.
    #[arg(long)]
    mode: Option<String>,
}

impl SharedFlags {
    fn common(&self) -> CommonArgs {
        CommonArgs {
            config: self.config.clone(),
            seed: self.seed,
            out: self.out.clone(),
            overrides: self.overrides.clone(),
            mode: self.mode.clone(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train the autoencoder (or the diffusion model, per config).
    Train {
        #[command(flatten)]
        flags: SharedFlags,
    },
    /// Reconstruct one PDB file through a trained autoencoder.
    Reconstruct {
        #[command(flatten)]
        flags: SharedFlags,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Interpolate between two conformational endpoints.
    Interpolate {
        #[command(flatten)]
        flags: SharedFlags,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        endpoint_a: PathBuf,
        #[arg(long)]
        endpoint_b: PathBuf,
        #[arg(long, default_value_t = 10)]
        frames: usize,
    },
    /// Sample latents from a diffusion checkpoint and decode them.
    Sample {
        #[command(flatten)]
        flags: SharedFlags,
        #[arg(long)]
        ae_checkpoint: PathBuf,
        #[arg(long)]
        diffusion_checkpoint: PathBuf,
        #[arg(long, default_value_t = 8)]
        count: usize,
    },
    /// Evaluate a checkpoint over a dataset.
    Eval {
        #[command(flatten)]
        flags: SharedFlags,
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train { flags } => commands::train::run(&flags.common()),
        Command::Reconstruct { flags, checkpoint, input } => {
            commands::reconstruct::run(&flags.common(), checkpoint, input)
        }
        Command::Interpolate { flags, checkpoint, endpoint_a, endpoint_b, frames } => {
            commands::interpolate::run(&flags.common(), checkpoint, endpoint_a, endpoint_b, *frames)
        }
        Command::Sample { flags, ae_checkpoint, diffusion_checkpoint, count } => {
            commands::sample::run(&flags.common(), ae_checkpoint, diffusion_checkpoint, *count)
        }
        Command::Eval { flags, checkpoint } => commands::eval::run(&flags.common(), checkpoint),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!(
                "{}",
                serde_json::json!({"error": {"category": e.category(), "message": e.to_string()}})
            );
            ExitCode::FAILURE
        }
    }
}
