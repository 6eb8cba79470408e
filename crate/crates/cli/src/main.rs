//! `cppmech`: run the mechanism, its solver and its audits on JSON instances.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser, Debug)]
#[command(name = "cppmech", version, about = "Truthful-in-expectation mechanism for combinatorial public projects")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// Instance JSON file.
    #[arg(long, global = true)]
    pub instance: Option<PathBuf>,
    /// Override the instance's k.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Relative duality-gap tolerance [default: 1e-6; 1e-8 for audit].
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Frank-Wolfe iteration cap [default: 5000].
    #[arg(long, global = true)]
    pub max_iters: Option<usize>,
    /// Solver settings as JSON (tol, max_iters, shrink, sufficient_increase); flags given explicitly win.
    #[arg(long, global = true)]
    pub solver_config: Option<PathBuf>,
    /// RNG seed; drawn from system entropy and logged to stderr when absent.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = "rk")]
    pub rounding: cpp_mechanism::Rounding,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    /// Also write the JSON artifact here.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Largest m for which lottery values are enumerated exactly.
    #[arg(long, global = true, default_value_t = 20)]
    pub enum_cap: usize,
    /// Largest m for brute-force optima.
    #[arg(long, global = true, default_value_t = 24)]
    pub bf_cap: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Table,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Smoke,
    Random,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the allocation program and report x*, its value and gap.
    Solve,
    /// Run the mechanism: solve, round, charge payments.
    Allocate {
        /// Use the composed mechanism (exact brute force with probability e·2^{-2nm}).
        #[arg(long)]
        composed: bool,
    },
    /// Expected and realized VCG payments.
    Payments,
    /// Run the verification suite; exits 1 if any check fails.
    Audit {
        /// Built-in suite; the default without --instance is smoke.
        #[arg(long, value_enum)]
        suite: Option<Suite>,
        /// Number of instances for the random suite.
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 8)]
        misreports: usize,
        /// Monte Carlo samples for the rounding-distribution check.
        #[arg(long, default_value_t = 200_000)]
        mc_samples: usize,
    },
    /// Exact law of the rounding at a point, with an optional Monte Carlo column.
    Distribution {
        /// Comma-separated point, e.g. `--x 1,1`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "from")]
        x: Option<Vec<f64>>,
        /// A solve/allocate JSON artifact to take x* from.
        #[arg(long)]
        from: Option<PathBuf>,
        /// Number of players n (sets the cancellation rate of rkplus).
        #[arg(long)]
        players: Option<usize>,
        /// Monte Carlo samples to compare against.
        #[arg(long)]
        mc: Option<usize>,
    },
    /// Solver timings on seeded random instances of growing size.
    Bench {
        #[arg(long, default_value_t = 3)]
        count: usize,
        #[arg(long, default_value_t = 12)]
        max_m: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve => commands::solve(&cli.run),
        Command::Allocate { composed } => commands::allocate(&cli.run, composed),
        Command::Payments => commands::payments(&cli.run),
        Command::Audit {
            suite,
            count,
            misreports,
            mc_samples,
        } => commands::audit(&cli.run, suite, count, misreports, mc_samples),
        Command::Distribution { x, from, players, mc } => {
            commands::distribution(&cli.run, x, from, players, mc)
        }
        Command::Bench { count, max_m } => commands::bench(&cli.run, count, max_m),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(commands::exit_code(&err))
        }
    }
}
