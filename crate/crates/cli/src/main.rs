//! Command-line front end: classification, action functions, persistence
//! experiments, periodicity witnesses, the model registry, and the scaling
//! identities. Exit codes: 0 success, 1 I/O or schema error, 2 failed
//! mathematical precondition or classification error.

mod commands;
mod render;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "toricsym",
    about = "Classify singular orbits of integrable systems and compute their circle-action generators",
    version
)]
struct Cli {
    /// Structural tolerance override (also via TORICSYM_TOL).
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Deterministic seed for randomized suites.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for grid and epsilon sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify the linearized data of a system or zoo entry.
    Classify(commands::ClassifyArgs),
    /// Action function on a momentum grid (loop integral or monodromy).
    Action(commands::ActionArgs),
    /// Persistence experiment over a list of perturbation sizes.
    Persist(commands::PersistArgs),
    /// Loop-based periodicity witness on a singular fiber.
    Witness(commands::WitnessArgs),
    /// Model registry: list entries or emit a system descriptor.
    Zoo(commands::ZooArgs),
    /// Normal-form scaling identities of the resonance-order family.
    Scale(commands::ScaleArgs),
}

fn main() {
    let cli = Cli::parse();
    let tol = cli
        .tol
        .or_else(|| std::env::var("TORICSYM_TOL").ok().and_then(|v| v.parse().ok()));
    let ctx = commands::Context { tol, seed: cli.seed, jobs: cli.jobs.max(1) };
    let result = match cli.command {
        Command::Classify(args) => commands::run_classify(&args, &ctx),
        Command::Action(args) => commands::run_action(&args, &ctx),
        Command::Persist(args) => commands::run_persist(&args, &ctx),
        Command::Witness(args) => commands::run_witness(&args, &ctx),
        Command::Zoo(args) => commands::run_zoo(&args, &ctx),
        Command::Scale(args) => commands::run_scale(&args, &ctx),
    };
    match result {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(e.exit_code());
        }
    }
}
