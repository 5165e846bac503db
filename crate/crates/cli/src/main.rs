mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cmps_core::estimation::Estimator;
use cmps_core::simulation::{BenchmarkKind, EnsembleMode};

/// Tomography of continuous matrix product states from density-like correlation functions.
#[derive(Debug, Parser)]
#[command(name = "cmps-tomo", version)]
pub struct Cli {
    /// Master seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Output file.
    #[arg(short = 'o', long = "out", global = true)]
    pub out: Option<PathBuf>,

    /// Log progress to standard error.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a random cMPS from an ensemble.
    Generate(GenerateArgs),
    /// Sample the n-point function of a cMPS on a uniform grid.
    Correlate(CorrelateArgs),
    /// Add white Gaussian noise to a correlation tensor.
    Noise(NoiseArgs),
    /// Reconstruct (D, M) and (Q, R, K) from sampled correlators.
    Reconstruct(ReconstructArgs),
    /// Predict an n-point function from an MD model (or a cMPS file).
    Predict(PredictArgs),
    /// Monte Carlo robustness benchmarks.
    Benchmark(BenchmarkArgs),
    /// Pairing, degeneracy and block structure of a cMPS.
    Analyze(AnalyzeArgs),
    /// Check project files against their schemas.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Naive,
    Refined,
}

impl From<ModeArg> for EnsembleMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Naive => EnsembleMode::NaiveQr,
            ModeArg::Refined => EnsembleMode::RefinedKr,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum EstimatorArg {
    Prony,
    PronyKernel,
    Mpm,
    Ssmpm,
}

impl From<EstimatorArg> for Estimator {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Prony => Estimator::Prony,
            EstimatorArg::PronyKernel => Estimator::PronyKernel,
            EstimatorArg::Mpm => Estimator::Mpm,
            EstimatorArg::Ssmpm => Estimator::Ssmpm,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum KindArg {
    NoiseSnr,
    PerturbM,
    AdditionalField,
}

impl From<KindArg> for BenchmarkKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::NoiseSnr => BenchmarkKind::NoiseSnr,
            KindArg::PerturbM => BenchmarkKind::PerturbM,
            KindArg::AdditionalField => BenchmarkKind::AdditionalField,
        }
    }
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    /// Bond dimension.
    #[arg(long)]
    pub d: usize,
    #[arg(long, value_enum, default_value = "refined")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub mu: f64,
    #[arg(long, default_value_t = 0.01)]
    pub sigma: f64,
    /// Scale of K and R in the refined ensemble.
    #[arg(long, default_value_t = 0.1)]
    pub eta: f64,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub ensemble: EnsembleArgs,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    /// cMPS file.
    #[arg(long, short = 'i')]
    pub input: PathBuf,
    /// Correlator order (number of field pairs).
    #[arg(long)]
    pub n: usize,
    /// Samples per axis.
    #[arg(long = "samples", short = 'N', default_value_t = 200)]
    pub samples: usize,
    /// Sampling interval; a fraction of the Nyquist interval when omitted.
    #[arg(long)]
    pub delta_tau: Option<f64>,
    #[arg(long, default_value_t = 0.8)]
    pub nyquist_fraction: f64,
    /// Subtract the squared density (2-point functions only).
    #[arg(long)]
    pub amputate: bool,
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    /// Correlation tensor file (JSON or CSV).
    #[arg(long, short = 'i')]
    pub input: PathBuf,
    /// Signal-to-noise ratio (`inf` for none).
    #[arg(long)]
    pub snr: f64,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// 3-point correlation tensor.
    #[arg(long)]
    pub c3: PathBuf,
    /// Optional 2-point correlation tensor (JSON or CSV).
    #[arg(long)]
    pub c2: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "ssmpm")]
    pub estimator: EstimatorArg,
    /// Model order (number of poles); estimated from the Hankel spectrum when omitted.
    #[arg(long)]
    pub order: Option<usize>,
    /// Pencil parameter P.
    #[arg(long = "pencil", short = 'P')]
    pub pencil: Option<usize>,
    /// Relative singular-value threshold for order estimation.
    #[arg(long, default_value_t = 1e-8)]
    pub order_threshold: f64,
    /// Prony candidate count relative to the order.
    #[arg(long, default_value_t = 1.5)]
    pub overestimate: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub match_tol: f64,
    #[arg(long, default_value_t = 0.05)]
    pub pairing_tol: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub kronecker_threshold: f64,
    /// Zero-fill M entries without usable prescriptions instead of failing.
    #[arg(long)]
    pub block_tolerant: bool,
    /// Stop after (D, M); `--out` then receives the MD model.
    #[arg(long)]
    pub md_only: bool,
    /// Also write the MD model here.
    #[arg(long)]
    pub md_out: Option<PathBuf>,
    /// Quality report destination (JSON).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Skip the gauge fixing that yields K.
    #[arg(long)]
    pub no_k: bool,
    /// Use the raw estimator poles without least-squares polishing.
    #[arg(long)]
    pub no_refine: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// MD model or cMPS file.
    #[arg(long, short = 'm')]
    pub model: PathBuf,
    #[arg(long)]
    pub n: usize,
    /// Samples per axis (taken from --compare when omitted).
    #[arg(long = "samples", short = 'N')]
    pub samples: Option<usize>,
    /// Sampling interval (taken from --compare when omitted).
    #[arg(long)]
    pub delta_tau: Option<f64>,
    #[arg(long)]
    pub amputate: bool,
    /// Tensor to compare the prediction against.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    /// Pass threshold on the relative sup-norm deviation.
    #[arg(long, default_value_t = 1e-6)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long, value_enum)]
    pub kind: KindArg,
    /// Comma-separated grid of SNR or epsilon values (`inf` allowed for SNR).
    #[arg(long, value_delimiter = ',', required = true)]
    pub grid: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    #[arg(long)]
    pub d: usize,
    /// Ensemble; defaults to refined for noise_snr and naive otherwise.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long = "samples", short = 'N', default_value_t = 200)]
    pub samples: usize,
    #[arg(long)]
    pub delta_tau: Option<f64>,
    #[arg(long, default_value_t = 0.8)]
    pub nyquist_fraction: f64,
    #[arg(long, value_enum, default_value = "ssmpm")]
    pub estimator: EstimatorArg,
    #[arg(long = "pencil", short = 'P')]
    pub pencil: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    pub criterion: f64,
    /// CSV destination; defaults to the JSON path with a .csv extension.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// cMPS file.
    #[arg(long, short = 'i')]
    pub input: PathBuf,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
