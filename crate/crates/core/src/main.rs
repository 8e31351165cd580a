use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use emstab::config::{parse_config, Command};
use emstab::error::Error;
use emstab::experiment::{run_experiment, RunOptions};

/// Simulation and stability certificates for stochastic differential
/// equations with piecewise-constant delay arguments.
#[derive(Parser)]
#[command(name = "emstab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Subcommand)]
enum CliCommand {
    /// Monte Carlo moment estimation (plus exact oracles when available)
    Simulate(RunArgs),
    /// Evaluate one stability-transfer certificate
    Certify(RunArgs),
    /// Solve the admissible tau / h threshold of a certificate
    Threshold(RunArgs),
    /// Coupled-path strong-convergence study against the exact sampler
    Convergence(RunArgs),
    /// Drift-criterion margin test
    Lyapunov(RunArgs),
    /// Compose all four certificates around the full cycle
    Chain(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment definition file
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's [output] dir)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override
    #[arg(long)]
    seed: Option<u64>,
    /// Path-count override
    #[arg(long)]
    paths: Option<u64>,
    /// Worker-thread override (0 = default pool)
    #[arg(long)]
    threads: Option<usize>,
}

fn run(expected: Command, args: &RunArgs) -> Result<(), Error> {
    let text = std::fs::read_to_string(&args.config)?;
    let cfg = parse_config(&text)?;
    if cfg.command != expected {
        return Err(Error::Validation(format!(
            "config declares command = {}, but the {} subcommand was invoked",
            cfg.command.name(),
            expected.name()
        )));
    }
    let opts = RunOptions {
        out_dir: args.out.clone(),
        seed: args.seed,
        n_paths: args.paths,
        threads: args.threads,
    };
    let summary = run_experiment(&cfg, &opts)?;
    for note in &summary.notes {
        println!("{note}");
    }
    for file in &summary.files {
        println!("wrote {}", file.display());
    }
    println!("wrote {}", summary.manifest.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match &cli.command {
        CliCommand::Simulate(a) => (Command::Simulate, a),
        CliCommand::Certify(a) => (Command::Certify, a),
        CliCommand::Threshold(a) => (Command::Threshold, a),
        CliCommand::Convergence(a) => (Command::Convergence, a),
        CliCommand::Lyapunov(a) => (Command::Lyapunov, a),
        CliCommand::Chain(a) => (Command::Chain, a),
    };
    match run(command, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
