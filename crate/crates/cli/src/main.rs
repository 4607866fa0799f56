use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand as ClapSubcommand};
use minsurf::experiments::{self, ExperimentConfig, Subcommand};
use minsurf::Error;

#[derive(Parser, Debug)]
#[command(name = "minsurf", version, about = "Minimal surface DN-map experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for manifest.json and CSV files.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; overrides `workers` in the config.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, short)]
    verbose: bool,
}

#[derive(ClapSubcommand, Debug)]
enum Command {
    /// Solve the minimal surface equation and report convergence and errors.
    Forward(RunArgs),
    /// Second-linearization vanishing sweep and third-linearization PDE vs FD.
    LinearizeCheck(RunArgs),
    /// Refinement sweep of the third-order integral identity.
    IdentityCheck(RunArgs),
    /// DN map reconstructed from area data vs the direct DN map.
    AreaPipeline(RunArgs),
    /// Interior recovery of Q = 1 - 1/c from probe functionals.
    RecoverQ(RunArgs),
    /// Exponent fits of the boundary-jet probe functional.
    BoundaryJet(RunArgs),
}

impl Command {
    fn split(self) -> (Subcommand, RunArgs) {
        match self {
            Command::Forward(a) => (Subcommand::Forward, a),
            Command::LinearizeCheck(a) => (Subcommand::LinearizeCheck, a),
            Command::IdentityCheck(a) => (Subcommand::IdentityCheck, a),
            Command::AreaPipeline(a) => (Subcommand::AreaPipeline, a),
            Command::RecoverQ(a) => (Subcommand::RecoverQ, a),
            Command::BoundaryJet(a) => (Subcommand::BoundaryJet, a),
        }
    }
}

const EXIT_ASSERTION: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn main() -> ExitCode {
    let (sub, args) = Cli::parse().command.split();
    env_logger::Builder::new()
        .filter_level(if args.verbose { log::LevelFilter::Debug } else { log::LevelFilter::Warn })
        .parse_default_env()
        .init();

    let mut cfg = match ExperimentConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(w) = args.workers {
        cfg.workers = Some(w);
    }
    if let Err(e) = cfg.validate(sub) {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    if let Some(w) = cfg.workers {
        if let Err(e) = minsurf::par::configure_workers(w) {
            eprintln!("error: worker pool: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }

    log::info!("running {sub} with {}", args.config.display());
    let outcome = match experiments::run(sub, &cfg) {
        Ok(o) => o,
        Err(e @ (Error::Config(_) | Error::InvalidArgument(_))) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
        Err(e) => {
            eprintln!("error: {sub} failed: {e}");
            return ExitCode::from(EXIT_ASSERTION);
        }
    };
    if let Err(e) = experiments::write_outputs(&args.out, &cfg, &outcome) {
        eprintln!("error: writing outputs to {}: {e}", args.out.display());
        return ExitCode::from(EXIT_ASSERTION);
    }
    for a in &outcome.assertions {
        println!("{} {}: {}", if a.passed { "PASS" } else { "FAIL" }, a.name, a.detail);
    }
    if outcome.passed() {
        ExitCode::SUCCESS
    } else {
        let names: Vec<&str> = outcome.failures().map(|a| a.name.as_str()).collect();
        eprintln!("assertion failed: {}", names.join(", "));
        ExitCode::from(EXIT_ASSERTION)
    }
}
