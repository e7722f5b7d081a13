use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod failure;

#[derive(Parser, Debug)]
#[command(name = "doa", version, about = "DOA estimation with distorted-sensor detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the config file. Limited to the signed
    /// 64-bit range so it can be echoed back as TOML.
    #[arg(long, value_parser = clap::value_parser!(u64).range(..=i64::MAX as u64))]
    pub seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic scenario file.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(short, long, default_value = "scenario.json")]
        out: PathBuf,
    },
    /// Run the decomposition, detection and DOA estimation on one scenario.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Scenario file; simulated from the config when omitted.
        #[arg(short, long)]
        input: Option<PathBuf>,
        #[arg(short, long, default_value = "solution.json")]
        out: PathBuf,
        /// Iteration trace CSV; defaults to `<out stem>.trace.csv`.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run every sweep in the config and write one CSV per sweep.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(short = 'd', long, default_value = "bench-out")]
        out_dir: PathBuf,
        /// Trials per sweep value.
        #[arg(short, long)]
        q: Option<usize>,
        /// Worker threads (0 = all cores).
        #[arg(short, long)]
        workers: Option<usize>,
    },
    /// MUSIC spectrum of a scenario (uses Y) or a solution (uses Ẑ).
    Spectrum {
        #[command(flatten)]
        common: Common,
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long, default_value = "spectrum.csv")]
        out: PathBuf,
        /// Number of sources K; defaults to the input's configuration.
        #[arg(short = 'k', long)]
        sources: Option<usize>,
        #[arg(long)]
        grid_step: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { common, out } => commands::simulate(&common, &out),
        Command::Solve { common, input, out, trace } => commands::solve(&common, input.as_deref(), &out, trace),
        Command::Bench { common, out_dir, q, workers } => commands::bench(&common, &out_dir, q, workers),
        Command::Spectrum { common, input, out, sources, grid_step } => {
            commands::spectrum(&common, &input, &out, sources, grid_step)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}
