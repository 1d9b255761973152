use std::path::PathBuf;
use std::process::exit;

use clap::{Parser, Subcommand};

use adaptive_mpc::cli::{cmd_diagnose, cmd_simulate, cmd_sweep, Overrides};

/// Adaptive tracking MPC: simulation, parameter sweeps, and diagnostics.
#[derive(Parser)]
#[command(name = "adaptive-mpc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one closed loop and write the trace CSV.
    Simulate {
        /// Configuration file (key = value lines); defaults to the CSTR benchmark.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output CSV path (default trace.csv).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Bootstrap seed override.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the regularization/window sweep and write the matrix CSV.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output CSV path (default sweep.csv).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for sweep cells.
        #[arg(long)]
        workers: Option<usize>,
        /// Regularization values, comma separated.
        #[arg(long, value_delimiter = ',')]
        lambda: Option<Vec<f64>>,
        /// Window lengths, comma separated.
        #[arg(long, value_delimiter = ',')]
        window: Option<Vec<usize>>,
    },
    /// Bootstrap, identify once, and print assumption diagnostics.
    Diagnose {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Simulate { config, out, seed } => cmd_simulate(
            config.as_deref(),
            &Overrides {
                out,
                seed,
                ..Overrides::default()
            },
        ),
        Command::Sweep {
            config,
            out,
            seed,
            workers,
            lambda,
            window,
        } => cmd_sweep(
            config.as_deref(),
            &Overrides {
                out,
                seed,
                workers,
                lambdas: lambda,
                windows: window,
            },
        ),
        Command::Diagnose { config, seed } => cmd_diagnose(
            config.as_deref(),
            &Overrides {
                seed,
                ..Overrides::default()
            },
        ),
    };
    exit(code);
}
