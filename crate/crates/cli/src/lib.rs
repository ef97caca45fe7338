//! The `tc` command-line tool.
//!
//! Exit codes: 0 success, 1 usage, 2 bad input data, 3 solver failure,
//! 4 bound violation. `TC_THREADS` sets the worker pool size.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub mod commands;
pub mod error;
pub mod io;

pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "tc", version, about = "Low-rank optimal transport by transport clustering")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset to a directory.
    Generate(GenerateArgs),
    /// Compute a rank-K plan between two point clouds.
    Solve(SolveArgs),
    /// Compare plug-in and low-rank W2 estimates on the fragmented hypercube.
    EstimateW2(EstimateArgs),
    /// Check approximation bounds on random instances and the lower-bound
    /// constructions.
    VerifyBounds(VerifyArgs),
    /// Run a parameter sweep.
    Ablate(AblateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Dataset {
    Moons8g,
    ShiftedGaussians,
    Sbm,
    Hypercube,
    LbEuclidean,
    LbSqeuclidean,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub dataset: Dataset,
    /// Points per side (SBM: total vertices).
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Clusters, blocks, or lower-bound size parameter.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 30)]
    pub d: usize,
    #[arg(long, default_value_t = 0.1)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
    #[arg(long, default_value_t = 0.05)]
    pub q: f64,
    #[arg(long, default_value_t = 1.0)]
    pub weight_lo: f64,
    #[arg(long, default_value_t = 2.0)]
    pub weight_hi: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub eps_geom: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Sqeuclidean,
    Euclidean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegistrationArg {
    Monge,
    Kantorovich,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverArg {
    Gkms,
    Kernel,
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Registered,
    Random,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Source points (CSV with `x0..` columns and optional `label`).
    #[arg(long)]
    pub x: Option<PathBuf>,
    /// Target points.
    #[arg(long)]
    pub y: Option<PathBuf>,
    /// Dense cost matrix, headerless; overrides `--metric`.
    #[arg(long)]
    pub cost: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Metric::Sqeuclidean)]
    pub metric: Metric,
    /// One integer label per row, headerless.
    #[arg(long)]
    pub labels_x: Option<PathBuf>,
    #[arg(long)]
    pub labels_y: Option<PathBuf>,
    /// Row weights, headerless; Kantorovich only.
    #[arg(long)]
    pub weights_x: Option<PathBuf>,
    #[arg(long)]
    pub weights_y: Option<PathBuf>,
    #[arg(long)]
    pub rank: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 2.0)]
    pub gkms_step: f64,
    #[arg(long, default_value_t = 250)]
    pub gkms_iters: usize,
    #[arg(long, default_value_t = 0.5)]
    pub blend: f64,
    #[arg(long, value_enum, default_value_t = RegistrationArg::Monge)]
    pub registration: RegistrationArg,
    #[arg(long, value_enum, default_value_t = SolverArg::Gkms)]
    pub solver: SolverArg,
    #[arg(long, value_enum, default_value_t = InitArg::Registered)]
    pub init: InitArg,
    /// Fail instead of rounding when Sinkhorn does not converge.
    #[arg(long)]
    pub strict_sinkhorn: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report path; factor files go next to it.
    #[arg(long, default_value = "report.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long, default_value_t = 30)]
    pub d: usize,
    #[arg(long, default_value_t = 10)]
    pub rank: usize,
    /// Sample sizes; defaults to eight log-spaced values from 29 to 119.
    #[arg(long, value_delimiter = ',')]
    pub n_grid: Option<Vec<usize>>,
    #[arg(long, default_value_t = 10)]
    pub runs: usize,
    #[arg(long, value_enum, default_value_t = InitArg::Random)]
    pub init: InitArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CostClassArg {
    L2,
    Sql2,
    Metric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LowerBound {
    Euclidean,
    Sqeuclidean,
    None,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 6)]
    pub n: usize,
    #[arg(long, default_value_t = 2)]
    pub rank: usize,
    #[arg(long, value_enum, default_value_t = CostClassArg::L2)]
    pub cost_class: CostClassArg,
    #[arg(long, value_enum, default_value_t = LowerBound::None)]
    pub lb: LowerBound,
    #[arg(long, default_value_t = 200)]
    pub lb_k: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lb_eps: f64,
    /// Minimum ratio for the lower-bound construction; 1.9 (Euclidean) or
    /// 2.85 (squared Euclidean) by default.
    #[arg(long)]
    pub lb_min_ratio: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Sweep {
    Epsilon,
    Init,
    Rank,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long, value_enum)]
    pub sweep: Sweep,
    #[arg(long, default_value_t = 1024)]
    pub n: usize,
    #[arg(long, default_value_t = 8)]
    pub rank: usize,
    #[arg(long, default_value_t = 0.25)]
    pub sigma2: f64,
    /// Relative to `max |C|`.
    #[arg(long, value_delimiter = ',')]
    pub epsilons: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
    pub ranks: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parse, run, and map the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { error::EXIT_USAGE } else { error::EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    match run(cli) {
        Ok(()) => error::EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("TC_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .map_err(|_| CliError::Usage(format!("TC_THREADS={raw} is not a thread count")))?;
    // A second call in the same process keeps the existing pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate(a) => commands::generate(&a),
        Command::Solve(a) => commands::solve(&a),
        Command::EstimateW2(a) => commands::estimate_w2(&a),
        Command::VerifyBounds(a) => commands::verify_bounds(&a),
        Command::Ablate(a) => commands::ablate(&a),
    }
}
