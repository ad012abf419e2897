// `!(x > 0.0)` style checks are intentional: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Random-matrix invariance and GOE characterization experiments.
///
/// Exit status: 0 pass, 1 statistical failure, 2 usage or input error.
#[derive(Debug, Parser)]
#[command(name = "rmt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw samples and write them as CSV.
    Sample {
        #[command(flatten)]
        ensemble: EnsembleArgs,
        /// CSV destination; stdout if omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Test conjugation invariance of an ensemble.
    VerifyForward {
        #[command(flatten)]
        ensemble: EnsembleArgs,
        #[command(flatten)]
        test: TestArgs,
    },
    /// Run the GOE characterization pipeline on an ensemble or a sample CSV.
    Characterize {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        test: TestArgs,
        /// Write an SVG of the pooled off-diagonal |ECF| and the fitted normal CF.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Estimate the CF of a single trace projection.
    ProbeCf {
        #[command(flatten)]
        source: SourceArgs,
        /// `offdiag:K,J` (1-based, K < J) or `diag:J`.
        #[arg(long, default_value = "offdiag:1,2")]
        probe: String,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = 0.01)]
        delta: f64,
        /// CSV destination (t,re,im,radius,n); stdout if omitted.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Write an SVG of |ECF| with the model CF when it is known in closed form.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Check the deterministic rotation and trace identities.
    Identities {
        /// Central-difference step for the derivative identities.
        #[arg(long, default_value_t = rmt_core::symcore::identities::DEFAULT_FD_STEP, allow_negative_numbers = true)]
        fd_step: f64,
        /// JSON report destination.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EnsembleName {
    Goe,
    AffineGoe,
    UniformSym,
    SymHaar,
}

#[derive(Debug, Clone, Args)]
struct EnsembleArgs {
    #[arg(long, value_enum, default_value = "goe")]
    ensemble: EnsembleName,
    #[arg(long, default_value_t = 4)]
    dim: usize,
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    stream: u64,
    /// Diagonal shift of affine-goe.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    mu: f64,
    /// Variance multiplier s^2 of affine-goe.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    scale2: f64,
}

#[derive(Debug, Clone, Args)]
struct SourceArgs {
    #[command(flatten)]
    ensemble: EnsembleArgs,
    /// Read samples from this CSV instead of sampling.
    #[arg(long, conflicts_with_all = ["ensemble", "dim", "n", "mu", "scale2"])]
    input: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
struct GridArgs {
    #[arg(long, default_value_t = 4.0)]
    t_max: f64,
    /// Number of grid points, odd.
    #[arg(long, default_value_t = 41)]
    points: usize,
}

#[derive(Debug, Clone, Args)]
struct TestArgs {
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
    /// Haar draws added to the orthogonal family.
    #[arg(long, default_value_t = 10)]
    haar_count: usize,
    /// Random probes added to the single-entry probes.
    #[arg(long, default_value_t = 5)]
    random_probes: usize,
    /// JSON report destination; stdout if omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(err) = commands::configure_threads() {
        eprintln!("error: {err:#}");
        return ExitCode::from(2);
    }
    match commands::run(cli.command) {
        Ok(commands::Outcome::Pass) => ExitCode::SUCCESS,
        Ok(commands::Outcome::Fail) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
