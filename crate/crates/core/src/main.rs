use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mvsum::cli::{self, Command, Options};
use mvsum::{par, Error};

#[derive(Parser)]
#[command(name = "mvsum", version, about = "Changepoint detection for moving-sum data")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a series and its ground truth.
    Simulate(Args),
    /// Run the sampler on a series.
    Fit(Args),
    /// Score an estimate against a ground truth.
    Evaluate(Args),
    /// Estimate order feasibility proportions on simulated segments.
    MspaceStudy(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed of the configuration file.
    #[arg(long)]
    seed: Option<u64>,
    /// Fit the standard model (all orders pinned to zero).
    #[arg(long)]
    standard: bool,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn threads_from_env() -> Result<(), Error> {
    match std::env::var("MVSUM_THREADS") {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("MVSUM_THREADS must be a positive integer, got {v:?}")))?;
            if n == 0 {
                return Err(Error::Config("MVSUM_THREADS must be positive".into()));
            }
            par::set_threads(n);
            Ok(())
        }
        Err(_) => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, args) = match cli.command {
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Fit(a) => (Command::Fit, a),
        Cmd::Evaluate(a) => (Command::Evaluate, a),
        Cmd::MspaceStudy(a) => (Command::MspaceStudy, a),
    };
    let opts = Options {
        config: args.config,
        seed: args.seed,
        standard: args.standard,
        out: args.out,
    };
    match threads_from_env().and_then(|_| cli::run(cmd, &opts)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mvsum: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
