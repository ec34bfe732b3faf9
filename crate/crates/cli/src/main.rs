//! `sfsod`: sparse robust regression from the command line.
//!
//! Exit codes: 0 success (a time limit with an incumbent counts as success),
//! 1 usage or configuration error, 2 data error, 3 internal error or failed
//! benchmark cells.

mod commands;
mod config;
mod data;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "sfsod", version, about = "Simultaneous feature selection and outlier detection by mixed-integer programming")]
struct Cli {
    /// Log more (repeat for debug output).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one model with fixed budgets.
    Fit(FitArgs),
    /// Choose k_p, k_n (and the ridge radius) from the data.
    Tune(TuneArgs),
    /// Write synthetic contaminated datasets.
    Simulate(SimulateArgs),
    /// Run a simulation experiment and write its reports.
    Bench(BenchArgs),
}

#[derive(Args, Clone)]
pub struct DataArgs {
    /// Input CSV with a header row.
    pub data: PathBuf,
    /// Name of the response column.
    #[arg(long, default_value = "y")]
    pub response: String,
    /// Fit without an intercept.
    #[arg(long)]
    pub no_intercept: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BoundModeArg {
    Bigm,
    Sos,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Mip,
    Dfo,
    Concentration,
}

#[derive(Args, Clone)]
pub struct SolveArgs {
    /// Ridge radius on the standardized scale (`inf` for none).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Relative optimality gap at which the search stops.
    #[arg(long)]
    pub gap_tol: Option<f64>,
    /// Seconds per solve; 60 when neither flag nor config sets it.
    #[arg(long)]
    pub time_limit: Option<f64>,
    /// Branch-and-bound nodes per solve.
    #[arg(long)]
    pub node_limit: Option<u64>,
    /// Worker threads for the solver, the heuristics and tuning.
    #[arg(long, env = "SFSOD_THREADS")]
    pub threads: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub bound_mode: Option<BoundModeArg>,
    #[arg(long, value_enum, default_value = "mip")]
    pub method: MethodArg,
    /// TOML file with `[solver]`, `[heuristics]` and `[tuning]` tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Maximum number of selected predictors (intercept not counted).
    #[arg(long)]
    pub kp: usize,
    /// Maximum number of trimmed cases.
    #[arg(long)]
    pub kn: usize,
    #[command(flatten)]
    pub solve: SolveArgs,
    /// Write the standardized program in LP format.
    #[arg(long)]
    pub export_lp: Option<PathBuf>,
    /// Solution JSON path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Include wall-clock timings in the JSON (makes it run-dependent).
    #[arg(long)]
    pub timings: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CriterionArg {
    Cv,
    Bic,
}

#[derive(Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub solve: SolveArgs,
    #[arg(long, value_enum)]
    pub criterion: Option<CriterionArg>,
    /// Starting trim budget.
    #[arg(long)]
    pub kn_start: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Level of the deletion-residual threshold.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Directory for `tuning.json` and the trace CSVs.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Scenario TOML; the default scenario when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct BenchArgs {
    /// Experiment TOML; the default experiment when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, env = "SFSOD_THREADS")]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

/// An error with the exit code it maps to.
pub enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
    Internal(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Internal(_) => 3,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Data(e) | Failure::Internal(e) => e,
        }
    }
}

/// Classifies library errors: bad settings are usage errors, problems with
/// the numbers are data errors.
impl From<sfsod::Error> for Failure {
    fn from(e: sfsod::Error) -> Self {
        use sfsod::Error as E;
        match e {
            E::InvalidConfig { .. } | E::InvalidProblem(_) | E::Infeasible(_) => Failure::Usage(e.into()),
            E::ZeroMadColumn(_) | E::DimensionMismatch(_) | E::RankDeficient | E::FoldTooSmall(_) => {
                Failure::Data(e.into())
            }
            _ => Failure::Internal(e.into()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();

    let result = match cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Tune(a) => commands::tune(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Bench(a) => commands::bench(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
