//! Command-line front end: batch analysis of saved feature dumps.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use nc_metrics::features::FeatureError;
use nc_metrics::io::{
    self, default_labels_path, save_json, FeatureFormat, LoadError,
};
use nc_metrics::metrics::{self, MetricsError, PolicyChoice};
use nc_metrics::probe::{self, ProbeError};
use nc_metrics::spectra::{spectrum_report, SpectraError};
use nc_metrics::stats::covariances;
use nc_metrics::synth::{self, Geometry, GeneratorSpec, SynthError};
use nc_metrics::transfer::{self, TransferError};
use nc_metrics::LabeledFeatures;

#[derive(Parser)]
#[command(
    name = "nc-metrics",
    about = "Variability-collapse metrics, closed-form MSE probing, spectra, \
             synthetic configurations, and transfer correlations",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the collapse-metric report for a feature dump
    Metrics(MetricsArgs),
    /// Solve the closed-form MSE linear probe
    Probe(InputArgs),
    /// Report eigenvalue spectra, retained counts, and fuzziness sensitivity
    Spectrum(SpectrumArgs),
    /// Generate a synthetic feature configuration
    Synth(SynthArgs),
    /// Correlate collapse metrics with transferability over the bundled tables
    Transfer(TransferArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Feature file (CSV, or NPY features file of an NPY pair)
    #[arg(long)]
    input: PathBuf,
    /// Labels file for NPY input (default: <input>.labels.npy)
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Input format; inferred from the extension when omitted
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Output file (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Pseudoinversion policy: rel:auto, rank:R, rel:EPS, or abs:T
    #[arg(long, default_value = "rel:auto")]
    policy: String,
}

#[derive(Args)]
struct SpectrumArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Pseudoinversion policy: rel:auto, rank:R, rel:EPS, or abs:T
    #[arg(long, default_value = "rel:auto")]
    policy: String,
    /// Plot-ready two-column CSV of the sorted eigenvalues
    /// (default: derived from --out)
    #[arg(long)]
    csv_out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Configuration shape
    #[arg(long, value_enum)]
    geometry: GeometryArg,
    /// Number of classes
    #[arg(long)]
    k: usize,
    /// Feature dimension
    #[arg(long)]
    p: usize,
    /// Samples per class
    #[arg(long)]
    n: usize,
    /// Noise level for the noisy geometries
    #[arg(long)]
    sigma: Option<f64>,
    /// Generator seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output feature file
    #[arg(long)]
    out: PathBuf,
    /// Output format; inferred from the extension when omitted
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Args)]
struct TransferArgs {
    /// Use the bundled pretraining/downstream tables
    #[arg(long, required = true)]
    fixtures: bool,
    /// Output file (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Npy,
}

#[derive(Clone, Copy, ValueEnum)]
enum GeometryArg {
    Simplex,
    VbPerpNoise,
    VbNoise,
}

struct CliError {
    code: &'static str,
    message: String,
}

impl CliError {
    fn new(code: &'static str, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }
}

impl From<LoadError> for CliError {
    fn from(e: LoadError) -> Self {
        let code = match &e {
            LoadError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                "io.not_found"
            }
            LoadError::Io { .. } => "io.error",
            LoadError::Malformed { .. } | LoadError::BadNpyHeader { .. } => "io.malformed",
            LoadError::NonFinite { .. } => "data.non_finite",
            LoadError::LabelOutOfRange { .. } => "data.label_range",
            LoadError::EmptyClass { .. } => "data.empty_class",
            LoadError::SampleCountMismatch { .. } => "data.shape",
            LoadError::Feature(f) => return CliError::from(f.clone()),
        };
        CliError::new(code, e.to_string())
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        let code = match e {
            FeatureError::NonFinite { .. } => "data.non_finite",
            FeatureError::LabelOutOfRange { .. } => "data.label_range",
            FeatureError::EmptyClass { .. } => "data.empty_class",
            _ => "data.invalid",
        };
        CliError::new(code, e.to_string())
    }
}

impl From<SpectraError> for CliError {
    fn from(e: SpectraError) -> Self {
        let code = match e {
            SpectraError::BadPolicy(_) => "config.bad_policy",
            _ => "spectra.invalid_input",
        };
        CliError::new(code, e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        let code = match e {
            MetricsError::DegenerateBetweenVariance => "metrics.degenerate_between",
            MetricsError::ZeroNormFeature { .. } => "metrics.zero_norm",
            MetricsError::Spectra(_) => "spectra.invalid_input",
        };
        CliError::new(code, e.to_string())
    }
}

impl From<ProbeError> for CliError {
    fn from(e: ProbeError) -> Self {
        let code = match e {
            ProbeError::ImbalancedClasses { .. } => "probe.imbalanced",
            ProbeError::ShapeMismatch { .. } => "probe.shape",
        };
        CliError::new(code, e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        let code = match &e {
            SynthError::FullColumnRank { .. } => "synth.full_rank",
            SynthError::SingularTransform => "synth.singular",
            SynthError::Feature(_) => "data.invalid",
            _ => "synth.bad_config",
        };
        CliError::new(code, e.to_string())
    }
}

impl From<TransferError> for CliError {
    fn from(e: TransferError) -> Self {
        CliError::new("transfer.invalid_input", e.to_string())
    }
}

fn main() -> ExitCode {
    configure_threads();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let payload = serde_json::json!({
                "error": { "code": e.code, "message": e.message }
            });
            eprintln!("{payload}");
            ExitCode::from(2)
        }
    }
}

/// NC_METRICS_THREADS caps internal (BLAS) parallelism; 0 or unset means
/// automatic. Must run before the first BLAS call initializes its pool.
fn configure_threads() {
    if let Ok(raw) = std::env::var("NC_METRICS_THREADS") {
        if let Ok(threads) = raw.trim().parse::<usize>() {
            if threads > 0 {
                std::env::set_var("OPENBLAS_NUM_THREADS", threads.to_string());
                std::env::set_var("OMP_NUM_THREADS", threads.to_string());
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Metrics(args) => cmd_metrics(args),
        Command::Probe(args) => cmd_probe(args),
        Command::Spectrum(args) => cmd_spectrum(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Transfer(args) => cmd_transfer(args),
    }
}

fn resolve_format(path: &Path, format: Option<FormatArg>) -> FeatureFormat {
    match format {
        Some(FormatArg::Csv) => FeatureFormat::Csv,
        Some(FormatArg::Npy) => FeatureFormat::NpyPair,
        None => FeatureFormat::infer(path),
    }
}

fn load_input(args: &InputArgs) -> Result<LabeledFeatures, CliError> {
    let format = resolve_format(&args.input, args.format);
    let features = match format {
        FeatureFormat::Csv => io::load_csv(&args.input)?,
        FeatureFormat::NpyPair => {
            let labels = args
                .labels
                .clone()
                .unwrap_or_else(|| default_labels_path(&args.input));
            io::load_npy_pair(&args.input, &labels)?
        }
    };
    Ok(features)
}

fn parse_policy(raw: &str) -> Result<PolicyChoice, CliError> {
    raw.parse::<PolicyChoice>().map_err(CliError::from)
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => save_json(value, path).map_err(CliError::from),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            let result = serde_json::to_writer_pretty(&mut lock, value)
                .and_then(|_| writeln!(lock).map_err(serde_json::Error::io));
            match result {
                Ok(()) => Ok(()),
                // Readers like `head` may close the pipe early.
                Err(e) if e.io_error_kind() == Some(std::io::ErrorKind::BrokenPipe) => Ok(()),
                Err(e) => Err(CliError::new("io.error", e.to_string())),
            }
        }
    }
}

fn cmd_metrics(args: MetricsArgs) -> Result<(), CliError> {
    let policy = parse_policy(&args.policy)?;
    let features = load_input(&args.input)?;
    let report = metrics::evaluate_all(&features, &policy);
    emit(&report, args.input.out.as_deref())
}

fn cmd_probe(args: InputArgs) -> Result<(), CliError> {
    let features = load_input(&args)?;
    let solution = probe::solve_mse_probe(&features)?;
    emit(&solution, args.out.as_deref())
}

/// Spectrum output: the spectrum report plus fuzziness across the default
/// and relative-tolerance policies.
#[derive(Serialize)]
struct SpectrumOutput {
    #[serde(flatten)]
    report: nc_metrics::SpectrumReport,
    fuzziness_sensitivity: BTreeMap<String, f64>,
}

fn cmd_spectrum(args: SpectrumArgs) -> Result<(), CliError> {
    let policy = parse_policy(&args.policy)?;
    let features = load_input(&args.input)?;
    let covs = covariances(&features);
    let report = spectrum_report(&covs, &policy);

    let csv_path = args.csv_out.clone().or_else(|| {
        args.input
            .out
            .as_ref()
            .map(|out| out.with_extension("eigs.csv"))
    });
    if let Some(path) = csv_path {
        write_spectrum_csv(&report, &path)?;
    }

    let sensitivity = metrics::fuzziness_sensitivity(&covs)
        .into_iter()
        .map(|(policy, value)| (policy.to_string(), value))
        .collect();
    let output = SpectrumOutput {
        report,
        fuzziness_sensitivity: sensitivity,
    };
    emit(&output, args.input.out.as_deref())
}

fn write_spectrum_csv(
    report: &nc_metrics::SpectrumReport,
    path: &Path,
) -> Result<(), CliError> {
    let mut text = String::from("eig_sigma_b,eig_sigma_t\n");
    for (b, t) in report.eigs_sigma_b.iter().zip(&report.eigs_sigma_t) {
        text.push_str(&format!("{b},{t}\n"));
    }
    std::fs::write(path, text)
        .map_err(|e| CliError::new("io.error", format!("{}: {e}", path.display())))
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let geometry = match args.geometry {
        GeometryArg::Simplex => Geometry::SimplexCollapsed,
        GeometryArg::VbPerpNoise => Geometry::VbPerpNoise(require_sigma(&args)?),
        GeometryArg::VbNoise => Geometry::VbNoise(require_sigma(&args)?),
    };
    let spec = GeneratorSpec {
        class_count: args.k,
        feature_dim: args.p,
        samples_per_class: args.n,
        geometry: geometry.clone(),
        seed: args.seed,
    };
    let features = match geometry {
        Geometry::SimplexCollapsed => synth::collapsed_config(&spec)?,
        _ => synth::noisy_config(&spec)?,
    };
    let format = resolve_format(&args.out, args.format);
    io::save_features(&features, &args.out, format)?;
    Ok(())
}

fn require_sigma(args: &SynthArgs) -> Result<f64, CliError> {
    args.sigma.ok_or_else(|| {
        CliError::new("config.bad_args", "--sigma is required for noisy geometries")
    })
}

fn cmd_transfer(args: TransferArgs) -> Result<(), CliError> {
    let records = transfer::fixture_records();
    let report = transfer::correlation_report(&records, &transfer::fixture_groups())?;
    emit(&report, args.out.as_deref())
}
