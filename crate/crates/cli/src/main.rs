//! `hnne` command-line tool.
//!
//! Exit codes: 0 on success, 1 on runtime errors, 2 on usage errors.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hnne::dataio::{Format, Synthetic};
use hnne::InitMode;

#[derive(Parser, Debug)]
#[command(name = "hnne", version, about = "Hierarchical 1-NN graph embedding")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true, env = "HNNE_THREADS")]
    pub threads: Option<usize>,

    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Embed a dataset and save the embedding, model and run manifest.
    Fit(FitArgs),
    /// Project new points with a saved model.
    Transform(TransformArgs),
    /// Score an embedding against its original data.
    Metrics(MetricsArgs),
    /// Render a 2-D embedding as an SVG scatter plot.
    Plot(PlotArgs),
    /// Write a synthetic dataset.
    Synth(SynthArgs),
    /// Time the fit on a list of datasets.
    Bench(BenchArgs),
    /// Write the hierarchy grouping of every point at one level.
    Labels(LabelsArgs),
}

#[derive(Args, Debug, Clone)]
pub struct InputArgs {
    /// Data file (CSV or f32-raw), or a name when --synthetic is given.
    #[arg(long)]
    pub input: Option<String>,
    /// Generator spec such as `blobs,n=5000,dim=64,clusters=10`.
    #[arg(long, value_parser = parse_synthetic)]
    pub synthetic: Option<Synthetic>,
    /// Input format; inferred from the extension when omitted.
    #[arg(long, value_parser = parse_format)]
    pub format: Option<Format>,
    /// The CSV input starts with a header line.
    #[arg(long)]
    pub header: bool,
    /// One integer label per line.
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum NnChoice {
    Auto,
    Exact,
    Approx,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Target dimension.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub dim: u32,
    #[arg(long, default_value = "pca-centroids", value_parser = parse_init)]
    pub init: InitMode,
    #[arg(long, default_value_t = hnne::translate::DEFAULT_RADIUS_FRACTION)]
    pub radius_fraction: f64,
    /// Ball shrink factor; defaults to 1 for dim <= 3 and 0.6 otherwise.
    #[arg(long)]
    pub shrink: Option<f64>,
    /// Enforce the containment guarantee (shrink <= 1/(1 + 2 * radius fraction)).
    #[arg(long)]
    pub guarantee: bool,
    /// Widen flattened clusters (2-D only).
    #[arg(long)]
    pub inflate: bool,
    /// Hierarchy level used to place new points.
    #[arg(long)]
    pub transform_level: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "auto")]
    pub nn: NnChoice,
    /// Centroid count threshold for choosing the PCA level.
    #[arg(long, default_value_t = hnne::linproj::PCA_LEVEL_THRESHOLD)]
    pub pca_threshold: usize,
    /// Embedding output (CSV, or f32-raw by extension).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Run manifest; defaults to `<out>.json`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Also write the dataset labels (useful with --synthetic).
    #[arg(long)]
    pub labels_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TransformArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_parser = parse_format)]
    pub format: Option<Format>,
    #[arg(long)]
    pub header: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MetricName {
    Trust,
    Knn,
    Cta,
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    /// Original data.
    #[arg(long)]
    pub high: PathBuf,
    /// Embedding.
    #[arg(long)]
    pub low: PathBuf,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub header: bool,
    /// Metrics to compute; default: trust, plus knn and cta when labels allow.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub metrics: Vec<MetricName>,
    #[arg(long, default_value_t = hnne::metrics::DEFAULT_TRUST_K)]
    pub trust_k: usize,
    #[arg(long, value_delimiter = ',', default_values_t = hnne::metrics::DEFAULT_KNN_SWEEP)]
    pub knn_k: Vec<usize>,
    #[arg(long, default_value_t = hnne::metrics::DEFAULT_FOLDS)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Generator spec such as `blobs,n=5000,dim=64` or `square,n=100000`.
    #[arg(long, value_parser = parse_synthetic)]
    pub spec: Synthetic,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub labels_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Datasets: generator specs or data files.
    pub datasets: Vec<String>,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..))]
    pub dim: u32,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..))]
    pub repeats: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON manifest with the timing table.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Load this f32-raw file and report its size and the peak memory use.
    #[arg(long)]
    pub stream_load: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct LabelsArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Hierarchy level; 0 is the finest grouping.
    #[arg(long, default_value_t = 0)]
    pub level: usize,
    #[arg(long, value_enum, default_value = "auto")]
    pub nn: NnChoice,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_synthetic(s: &str) -> Result<Synthetic, String> {
    s.parse().map_err(|e: hnne::HnneError| e.to_string())
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse().map_err(|e: hnne::HnneError| e.to_string())
}

fn parse_init(s: &str) -> Result<InitMode, String> {
    s.parse().map_err(|e: hnne::HnneError| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
