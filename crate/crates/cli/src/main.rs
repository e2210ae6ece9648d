//! `otlimits`: empirical Wasserstein distances, their limit laws and
//! equality tests from the command line.
//!
//! Reports are JSON (to `-o` or stdout). Warnings and errors go to stderr
//! as one JSON object per line; any error exits nonzero.

mod commands;
mod inputs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use otlimits::{OtError, TestMethod};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "otlimits", version, about = "Empirical optimal transport: distances, limit laws and tests")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "OTLIMITS_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// W_p between two measures (and W_p under min(d, t) when --t is given).
    Dist(commands::DistArgs),
    /// Monte Carlo draws of the null or alternative limit law.
    LimitSim(commands::LimitSimArgs),
    /// One- or two-sample test of equal distributions.
    Test(commands::TestArgs),
    /// Two-sample tests over a list of thresholds.
    Sweep(commands::SweepArgs),
    /// The dyadic-grid bound evaluated on a signed vector.
    GridBound(commands::GridBoundArgs),
    /// Discretise a distribution function onto the points k / M.
    Bin(commands::BinArgs),
}

/// Where the measures live: a point set, a tree or a regular grid.
#[derive(Args, Debug, Clone, Default)]
pub struct StructureArgs {
    /// Points CSV (`id,x1,..,xD`) or distance matrix CSV.
    #[arg(long, group = "structure")]
    pub space: Option<PathBuf>,
    /// Tree CSV (`node,parent,weight`).
    #[arg(long, group = "structure")]
    pub tree: Option<PathBuf>,
    /// Regular grid on [0,1]^D with this many points per side (power of two).
    #[arg(long, group = "structure")]
    pub grid_side: Option<usize>,
    /// Dimension of the --grid-side grid.
    #[arg(long, default_value_t = 2, requires = "grid_side")]
    pub grid_dim: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodArg {
    Exact,
    Tree,
    Grid,
}

impl From<MethodArg> for TestMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Exact => TestMethod::Exact,
            MethodArg::Tree => TestMethod::Tree,
            MethodArg::Grid => TestMethod::Grid,
        }
    }
}

pub fn warn(message: &str) {
    eprintln!("{}", json!({ "warning": message }));
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprintln!("{}", json!({ "error": { "kind": "usage", "message": e.to_string().trim() } }));
            return ExitCode::from(2);
        }
    };
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("{}", json!({ "error": { "kind": "threads", "message": e.to_string() } }));
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Dist(args) => commands::dist(args),
        Command::LimitSim(args) => commands::limit_sim(args),
        Command::Test(args) => commands::test(args),
        Command::Sweep(args) => commands::sweep(args),
        Command::GridBound(args) => commands::grid_bound(args),
        Command::Bin(args) => commands::bin(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.downcast_ref::<OtError>().map_or("error", OtError::kind);
            let message = format!("{e:#}");
            eprintln!("{}", json!({ "error": { "kind": kind, "message": message } }));
            ExitCode::from(1)
        }
    }
}
