//! `dlrom` - reproducible experiment harness for the DL-ROM workbench.
//!
//! Exit codes: 0 on success, 1 on test or metric failure (and on stage
//! errors), 2 on usage errors (bad arguments, missing or invalid config).

mod commands;
mod config;
mod junit;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "dlrom",
    version,
    about = "Build, train, and verify convolutional-autoencoder reduced order models for 1D parametric PDEs"
)]
struct Cli {
    /// Path to the run configuration JSON (required by every subcommand).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Cap the worker-thread count for within-stage parallelism.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Override the training seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every module's invariant suite; emits JUnit XML and a summary.
    Verify,
    /// Sample parameters, solve the full order model, and write the dataset.
    MakeData,
    /// Train the reduced network on the stored dataset.
    Train,
    /// Distill an encoder network against the stored quadrature latents.
    TrainEncoder {
        /// Target max-sample latent l2 error.
        #[arg(long, default_value_t = 1e-3)]
        delta: f64,
    },
    /// Evaluate the trained model against the exact-latent oracle.
    Eval,
    /// Sweep the training size and emit the error-trend CSV.
    Sweep,
    /// Evaluate the sample-budget formulas and condition checkers.
    Bounds,
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    let Some(config_path) = cli.config else {
        eprintln!("error: --config PATH is required");
        return ExitCode::from(2);
    };
    let loaded = match config::load_config(&config_path) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let out = cli
        .out
        .or_else(|| loaded.raw.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs/default"));
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("error: cannot configure {jobs} workers: {e}");
            return ExitCode::from(2);
        }
    }
    let seed = cli.seed.unwrap_or(loaded.raw.seed_train);

    let result = match cli.command {
        Command::Verify => match commands::cmd_verify(&loaded, &out) {
            Ok(0) => Ok(()),
            Ok(failures) => {
                eprintln!("verify: {failures} checks failed");
                return ExitCode::from(1);
            }
            Err(e) => Err(e),
        },
        Command::MakeData => commands::cmd_make_data(&loaded, &out, seed),
        Command::Train => commands::cmd_train(&loaded, &out, seed),
        Command::TrainEncoder { delta } => commands::cmd_train_encoder(&loaded, &out, seed, delta),
        Command::Eval => commands::cmd_eval(&loaded, &out),
        Command::Sweep => commands::cmd_sweep(&loaded, &out, seed),
        Command::Bounds => commands::cmd_bounds(&loaded, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
