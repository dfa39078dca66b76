mod io;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mechpoly_core::bic::DEFAULT_DIM_CAP;

use io::CliError;

/// Solver and checker for finite competing-mechanism games.
#[derive(Debug, Parser)]
#[command(name = "mechpoly", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub config: RunConfig,
}

#[derive(Debug, Args)]
pub struct RunConfig {
    /// Report path; the file must not exist yet.
    #[arg(short, long, global = true)]
    pub output: Option<PathBuf>,
    /// Directory for timestamped reports when --output is absent.
    #[arg(long, global = true, default_value = "reports")]
    pub out_dir: PathBuf,
    /// RNG seed; MECHPOLY_SEED takes precedence when set.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Tolerance for BIC and membership checks.
    #[arg(long, global = true, default_value_t = 1e-9)]
    pub membership_tol: f64,
    /// Tolerance for payoff comparisons.
    #[arg(long, global = true, default_value_t = 1e-6)]
    pub value_tol: f64,
    /// Leave runtime out of the report so reruns compare byte for byte.
    #[arg(long, global = true)]
    pub no_timing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Exact2,
    Grid,
    Alternating,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NotionArg {
    Pbe,
    Robust,
    StronglyRobust,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Gap3,
    TwoPrincipal,
    ConstantPayoff,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    /// Minmax method; defaults to exact2 with two principals, grid otherwise.
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Grid step.
    #[arg(long, default_value_t = 1e-2)]
    pub delta: f64,
    /// Random restarts for the alternating methods.
    #[arg(long, default_value_t = 32)]
    pub restarts: usize,
    /// Largest polytope (in variables) whose vertices are enumerated.
    #[arg(long, default_value_t = DEFAULT_DIM_CAP)]
    pub dim_cap: usize,
    /// Largest number of free grid coordinates.
    #[arg(long, default_value_t = 4)]
    pub grid_dim_cap: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a game file and list every violation.
    Validate { game: PathBuf },
    /// Check direct mechanisms for individual and joint BIC.
    BicCheck {
        game: PathBuf,
        #[arg(short, long = "mechanism", required = true)]
        mechanisms: Vec<PathBuf>,
    },
    /// Enumerate the vertices of a principal's BIC polytope.
    Vertices {
        game: PathBuf,
        #[arg(short)]
        j: String,
        #[arg(long, default_value_t = DEFAULT_DIM_CAP)]
        dim_cap: usize,
    },
    /// Best BIC reply of one principal to the others' direct mechanisms.
    BestResponse {
        game: PathBuf,
        #[arg(short)]
        j: String,
        #[arg(short, long = "mechanism")]
        mechanisms: Vec<PathBuf>,
    },
    /// Minmax value of a principal.
    Minmax {
        game: PathBuf,
        #[arg(short)]
        j: String,
        #[command(flatten)]
        solve: SolveArgs,
    },
    /// Maxmin value of a principal.
    Maxmin {
        game: PathBuf,
        #[arg(short)]
        j: String,
        /// Fail rather than fall back to the heuristic.
        #[arg(long)]
        force_exact: bool,
        #[command(flatten)]
        solve: SolveArgs,
    },
    /// Mechanisms of the other principals that hold one principal to its minmax.
    Punish {
        game: PathBuf,
        #[arg(short)]
        j: String,
        #[command(flatten)]
        solve: SolveArgs,
    },
    /// Is a direct-mechanism profile a robust-equilibrium allocation?
    Membership {
        game: PathBuf,
        #[arg(short, long = "mechanism", required = true)]
        mechanisms: Vec<PathBuf>,
        #[command(flatten)]
        solve: SolveArgs,
    },
    /// Build the deviator-reporting mechanism of one principal.
    BuildDrm {
        game: PathBuf,
        #[arg(short)]
        j: String,
        /// Direct mechanism implemented on path.
        #[arg(long)]
        target: PathBuf,
        /// `DEVIATOR=FILE`: mechanism used when DEVIATOR is reported;
        /// computed from the minmax punishment when absent.
        #[arg(long = "punishment")]
        punishments: Vec<String>,
        /// Also write the mechanism file here.
        #[arg(long)]
        write: Option<PathBuf>,
        #[command(flatten)]
        solve: SolveArgs,
    },
    /// Check a candidate equilibrium against its deviation sets.
    CheckEq {
        game: PathBuf,
        #[arg(long)]
        candidate: PathBuf,
        #[arg(long, value_enum)]
        notion: NotionArg,
    },
    /// Monte Carlo play of a mechanism profile.
    Simulate {
        game: PathBuf,
        #[arg(short, long = "mechanism", required = true)]
        mechanisms: Vec<PathBuf>,
        /// Strategy file; truthful reporting when absent.
        #[arg(long)]
        strategy: Option<PathBuf>,
        #[arg(long, default_value_t = 100_000)]
        rounds: usize,
    },
    /// Search random games for a certified minmax/maxmin gap.
    SearchGap {
        #[arg(long, value_enum, default_value = "gap3")]
        family: FamilyArg,
        #[arg(long, default_value_t = 500)]
        budget: usize,
        /// 1-based index of the principal compared.
        #[arg(short, default_value_t = 1)]
        j: usize,
        #[arg(long, default_value_t = 1e-2)]
        delta: f64,
        #[arg(long, default_value_t = DEFAULT_DIM_CAP)]
        dim_cap: usize,
        #[arg(long, default_value_t = 4)]
        grid_dim_cap: usize,
        /// Also write the best game found here.
        #[arg(long)]
        write: Option<PathBuf>,
    },
}

fn resolve_seed(flag: u64) -> Result<u64, CliError> {
    match std::env::var("MECHPOLY_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("MECHPOLY_SEED={s:?} is not a u64"))),
        Err(_) => Ok(flag),
    }
}

fn check_config(c: &RunConfig) -> Result<(), CliError> {
    for (name, v) in [("membership-tol", c.membership_tol), ("value-tol", c.value_tol)] {
        if v.is_nan() || v <= 0.0 {
            return Err(CliError::Usage(format!("--{name} must be positive")));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();
    let result = check_config(&cli.config)
        .and_then(|_| resolve_seed(cli.config.seed))
        .and_then(|seed| run::run(&cli.command, &cli.config, seed));
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    let mut report = outcome.report;
    if !cli.config.no_timing {
        report.runtime_ms = Some(started.elapsed().as_millis() as u64);
    }
    match io::write_report(&report, cli.config.output.as_deref(), &cli.config.out_dir) {
        Ok(path) => {
            println!("{} [report {}]", report.summary, path.display());
            ExitCode::from(outcome.exit)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
