//! `fess`: batch front end for functional effective sample size estimation.
//!
//! Exit codes: 0 on success, 1 when a computation fails, 2 on usage or
//! validation errors. Set `FESS_LOG` (e.g. `FESS_LOG=info`) for diagnostics.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fess_core::{Basis, CoordKind, CovFamily, NuggetMode, SweepAxis, Weighting};

#[derive(Debug, Parser)]
#[command(
    name = "fess",
    version,
    about = "Functional effective sample size for spatial curve data"
)]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Empirical trace-variogram, fitted models and dense model curves.
    Variogram(FitArgs),
    /// Fit trace-covariogram models and print their parameters.
    Fit(FitArgs),
    /// Plug-in functional ESS for each requested family.
    Ess(FitArgs),
    /// FAR(1) simulation and closed-form ESS sweeps.
    #[command(subcommand)]
    Far1(Far1Command),
    /// Full-data functional boxplot plus a subsample fidelity experiment.
    Boxplot(SubsampleArgs),
    /// Subsample fidelity experiment only.
    Subsample(SubsampleArgs),
}

#[derive(Debug, Subcommand)]
enum Far1Command {
    /// Simulate one FAR(1) path of curves.
    Simulate(SimulateArgs),
    /// Closed-form ESS over a geometric decay grid.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Wide CSV: coordinate columns followed by one column per grid level.
    #[arg(long)]
    input: PathBuf,
    /// JSON sidecar with column mapping and projection options.
    #[arg(long)]
    config: Option<PathBuf>,
    /// How to read the coordinate columns (overrides the sidecar).
    #[arg(long, value_enum)]
    coords: Option<CoordsArg>,
    /// Central meridian for the sinusoidal projection (overrides the sidecar).
    #[arg(long, allow_hyphen_values = true)]
    lon0: Option<f64>,
    /// Subtract the pointwise mean curve after loading.
    #[arg(long)]
    center: bool,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Output directory; created if missing.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Model family; repeat for several. Defaults to all three.
    #[arg(long, value_enum)]
    family: Vec<FamilyArg>,
    /// Number of equal-width lag bins.
    #[arg(long, default_value_t = fess_core::variogram::DEFAULT_BIN_COUNT, value_parser = clap::value_parser!(usize))]
    bins: usize,
    /// Largest lag in km; defaults to half the largest site distance.
    #[arg(long)]
    max_lag: Option<f64>,
    #[arg(long, value_enum, default_value_t = NuggetArg::Zero)]
    nugget: NuggetArg,
    #[arg(long, value_enum, default_value_t = WeightingArg::Unweighted)]
    weighting: WeightingArg,
}

#[derive(Debug, Args)]
struct SubsampleArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    out_dir: PathBuf,
    /// Curves per subsample.
    #[arg(long)]
    size: usize,
    /// Number of subsamples.
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long)]
    seed: u64,
    /// Subsample boxplots to export alongside the full-data one (boxplot only).
    #[arg(long, default_value_t = 3)]
    examples: usize,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Decay base for `lambda_k = lambda0^k`.
    #[arg(long, default_value_t = 0.5, conflicts_with = "lambdas")]
    lambda0: f64,
    /// Decay base for `eta_k = eta0^k`.
    #[arg(long, default_value_t = 0.5, conflicts_with = "etas")]
    eta0: f64,
    /// Number of basis functions for the geometric spec.
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Explicit autoregressive coefficients (comma separated).
    #[arg(long, value_delimiter = ',', requires = "etas")]
    lambdas: Option<Vec<f64>>,
    /// Explicit innovation standard deviations (comma separated).
    #[arg(long, value_delimiter = ',', requires = "lambdas")]
    etas: Option<Vec<f64>>,
    /// Number of curves.
    #[arg(long)]
    n: usize,
    /// Grid points on [0, 1].
    #[arg(long, default_value_t = 50)]
    m: usize,
    #[arg(long, value_enum, default_value_t = BasisArg::Fourier)]
    basis: BasisArg,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long, value_enum)]
    axis: AxisArg,
    /// Decay bases to evaluate (comma separated); defaults to 0.05, 0.10, ..., 0.95.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    /// Sample sizes (comma separated).
    #[arg(long = "n", value_delimiter = ',', default_values_t = [30usize, 60, 120])]
    n_list: Vec<usize>,
    /// Decay base of the other sequence.
    #[arg(long, default_value_t = 0.5)]
    fixed: f64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FamilyArg {
    Exponential,
    Spherical,
    Gaussian,
}

impl From<FamilyArg> for CovFamily {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Exponential => CovFamily::Exponential,
            FamilyArg::Spherical => CovFamily::Spherical,
            FamilyArg::Gaussian => CovFamily::Gaussian,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NuggetArg {
    Zero,
    Free,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum WeightingArg {
    Unweighted,
    PairCount,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CoordsArg {
    Auto,
    Geographic,
    Planar,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BasisArg {
    Fourier,
    Cosine,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AxisArg {
    Lambda0,
    Eta0,
}

impl FitArgs {
    fn families(&self) -> Vec<CovFamily> {
        if self.family.is_empty() {
            CovFamily::ALL.to_vec()
        } else {
            let mut out: Vec<CovFamily> = Vec::new();
            for f in self.family.iter().map(|&f| CovFamily::from(f)) {
                if !out.contains(&f) {
                    out.push(f);
                }
            }
            out
        }
    }

    fn fit_options(&self) -> fess_core::FitOptions {
        fess_core::FitOptions {
            nugget: match self.nugget {
                NuggetArg::Zero => NuggetMode::Zero,
                NuggetArg::Free => NuggetMode::Free,
            },
            weighting: match self.weighting {
                WeightingArg::Unweighted => Weighting::Unweighted,
                WeightingArg::PairCount => Weighting::PairCount,
            },
            ..Default::default()
        }
    }
}

impl From<CoordsArg> for CoordKind {
    fn from(c: CoordsArg) -> Self {
        match c {
            CoordsArg::Auto => CoordKind::Auto,
            CoordsArg::Geographic => CoordKind::Geographic,
            CoordsArg::Planar => CoordKind::Planar,
        }
    }
}

impl From<BasisArg> for Basis {
    fn from(b: BasisArg) -> Self {
        match b {
            BasisArg::Fourier => Basis::Fourier,
            BasisArg::Cosine => Basis::Cosine,
        }
    }
}

impl From<AxisArg> for SweepAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::Lambda0 => SweepAxis::Lambda0,
            AxisArg::Eta0 => SweepAxis::Eta0,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FESS_LOG", "warn")).init();
    // clap exits with 2 on usage errors
    let cli = Cli::parse();

    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t as usize).build_global() {
            eprintln!("error: cannot configure {t} worker threads: {e}");
            return ExitCode::from(1);
        }
    }

    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
