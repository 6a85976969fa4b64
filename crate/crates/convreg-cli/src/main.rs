//! `convreg` — fit convex regression models from the command line.
//!
//! Subcommands:
//!
//! * `generate` — write a reproducible synthetic instance (CSV + JSON
//!   sidecar).
//! * `solve` — run one solver on an instance; writes a fitted-model JSON,
//!   a per-iteration metrics CSV, and a summary JSON whose objective and
//!   infeasibility are recomputed from the saved model rather than trusted
//!   from solver internals.
//! * `oracle` — shorthand for `solve --method oracle` with γ defaulting to
//!   0, producing the reference fit other runs can be measured against.
//! * `compare` — tabulate several summary JSONs from the same instance.
//!
//! Exit codes: 0 when the run met its stopping thresholds, 2 when an
//! iteration or time cap ended it first, 1 on any error (errors also leave
//! a diagnostic JSON in the output directory when one can be written).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::Method;

#[derive(Parser)]
#[command(
    name = "convreg",
    version,
    about = "Convex regression: generate instances, fit models, compare solvers"
)]
struct Cli {
    #[command(subcommand)]
    pub(crate) cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic instance: a dataset CSV plus a JSON sidecar
    /// recording how it was drawn. Identical arguments reproduce identical
    /// bytes.
    Generate(GenerateArgs),
    /// Fit one model with a chosen method and write model / metrics /
    /// summary files into the output directory.
    Solve(Box<SolveArgs>),
    /// Certified dense reference solve (same as `solve --method oracle`,
    /// but γ defaults to 0 to produce the unregularized reference fit).
    Oracle(OracleArgs),
    /// Print an aligned table of two or more summary JSONs produced on the
    /// same instance; refuses mismatched instance fingerprints.
    Compare(CompareArgs),
}

#[derive(Args)]
pub struct GenerateArgs {
    /// Ground-truth family: quadratic | exponential
    #[arg(long)]
    pub(crate) kind: String,
    /// Input dimension n (number of covariates)
    #[arg(long)]
    pub(crate) n: usize,
    /// Number of observations N (must be ≥ n+1)
    #[arg(long = "N")]
    pub(crate) n_points: usize,
    /// RNG seed; the instance is a pure function of (kind, n, N, seed)
    #[arg(long)]
    pub(crate) seed: u64,
    /// Directory for the CSV and sidecar (created if missing)
    #[arg(long, default_value = ".")]
    pub(crate) out_dir: PathBuf,
}

#[derive(Args)]
pub struct SolveArgs {
    /// Instance CSV with header x1,...,xn,y
    #[arg(long)]
    pub(crate) instance: PathBuf,
    /// papg-a | papg-c | asm | admm | ipm | oracle
    #[arg(long, value_enum)]
    pub(crate) method: Method,
    /// Line-oriented key=value config file; CLI flags override it
    #[arg(long)]
    pub(crate) config: Option<PathBuf>,
    /// Directory for model/metrics/summary files (created if missing)
    #[arg(long, default_value = ".")]
    pub(crate) out_dir: PathBuf,
    /// Stopping regime: "gap" (normalized infeasibility + duality gap) or
    /// "accuracy" (RMS distance to --ref-model + infeasibility)
    #[arg(long, default_value = "gap")]
    pub(crate) stop: String,
    /// Model JSON of the unregularized reference fit (enables the accuracy
    /// metric and the accuracy stopping regime)
    #[arg(long)]
    pub(crate) ref_model: Option<PathBuf>,
    /// Summary JSON of an oracle run at the same γ on the same instance
    /// (enables the relative-suboptimality metric)
    #[arg(long)]
    pub(crate) ref_summary: Option<PathBuf>,

    /// Regularization weight γ (default 1e-4; for papg-c this is the final
    /// stage's γ)
    #[arg(long)]
    pub(crate) gamma: Option<f64>,
    /// Partition block count K for papg methods (default 2)
    #[arg(long = "K")]
    pub(crate) k: Option<usize>,
    /// Worker threads for papg block solves (default: CONVREG_WORKERS env
    /// var, then available parallelism)
    #[arg(long)]
    pub(crate) workers: Option<usize>,
    /// papg step rule: constant | adaptive
    #[arg(long)]
    pub(crate) step_mode: Option<String>,
    /// Backtracking curvature growth factor (> 1) for the adaptive step
    #[arg(long)]
    pub(crate) upsilon_step: Option<f64>,
    /// papg-c initial accuracy scale ε₀ (default: derived so the final
    /// stage's γ equals --gamma)
    #[arg(long)]
    eps0: Option<f64>,
    /// papg-c per-stage tightening factor β > 1
    #[arg(long)]
    pub(crate) beta: Option<f64>,
    /// papg-c regularization scale: stage t uses γ_t = κ_γ·ε₀/β^t
    #[arg(long)]
    pub(crate) kappa_gamma: Option<f64>,
    /// papg-c certificate scale: stage t targets δ_t = κ_δ·ε₀/β^t
    #[arg(long)]
    pub(crate) kappa_delta: Option<f64>,
    /// papg-c stage count (default 5)
    #[arg(long)]
    pub(crate) stages: Option<usize>,
    /// Normalized infeasibility threshold (default 1e-1)
    #[arg(long)]
    pub(crate) infeas_tol: Option<f64>,
    /// Normalized duality-gap threshold (default 5e-7)
    #[arg(long)]
    pub(crate) gap_tol: Option<f64>,
    /// RMS accuracy threshold for --stop accuracy (default 5e-3)
    #[arg(long)]
    pub(crate) accuracy_tol: Option<f64>,
    /// ADMM penalty parameter ρ (default 1.0)
    #[arg(long)]
    pub(crate) rho: Option<f64>,
    /// Iteration cap (papg-c: per-stage inner cap)
    #[arg(long)]
    pub(crate) iter_cap: Option<usize>,
    /// Wall-clock cap in seconds
    #[arg(long)]
    pub(crate) time_cap_s: Option<f64>,
}

#[derive(Args)]
pub struct OracleArgs {
    /// Instance CSV with header x1,...,xn,y
    #[arg(long)]
    pub(crate) instance: PathBuf,
    /// Regularization weight γ (default 0: the unregularized reference
    /// with minimum-norm subgradients)
    #[arg(long)]
    pub(crate) gamma: Option<f64>,
    /// Directory for model/metrics/summary files (created if missing)
    #[arg(long, default_value = ".")]
    pub(crate) out_dir: PathBuf,
}

#[derive(Args)]
pub struct CompareArgs {
    /// Two or more summary JSON files from runs on the same instance
    #[arg(required = true, num_args = 2..)]
    pub(crate) summaries: Vec<PathBuf>,
    /// Also write the table as CSV to this path
    #[arg(long)]
    pub(crate) csv: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successes; everything else is a
            // usage error and must exit 1 (2 is reserved for capped runs).
            use clap::error::ErrorKind;
            let ok = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = e.print();
            return if ok { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    let outcome = match cli.cmd {
        Cmd::Generate(args) => commands::cmd_generate(&args),
        Cmd::Solve(args) => commands::cmd_solve(&args),
        Cmd::Oracle(args) => commands::cmd_oracle(&args),
        Cmd::Compare(args) => commands::cmd_compare(&args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
