use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};

mod commands;

/// Shape clustering with currents in a Gaussian-kernel RKHS.
#[derive(Debug, Parser)]
#[command(name = "shape-currents", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert polyline and mesh files into a dataset bundle.
    Ingest(IngestArgs),
    /// Compute the Gram matrix of a dataset bundle.
    Gram(GramArgs),
    /// Run kernel k-means on a Gram matrix.
    Cluster(ClusterArgs),
    /// Score an existing clustering (silhouette, W, optional ARI).
    Validate(ValidateArgs),
    /// Run kernel k-means for a range of k and tabulate W and silhouette.
    Sweep(SweepArgs),
    /// Build a sizing report from a dataset bundle.
    Sizing(SizingArgs),
    /// Generate a synthetic scenario bundle from a JSON spec.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Shape files, or directories scanned (non-recursively) for .csv/.json/.off/.obj files.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Output bundle directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Force a format instead of guessing from the extension: csv, json, off, obj.
    #[arg(long)]
    pub format: Option<String>,
    /// CSV with an `id` column plus optional `label`, `true_label` and numeric metadata columns.
    #[arg(long)]
    pub meta: Option<PathBuf>,
    /// Treat CSV polylines as closed even when the last point does not repeat the first.
    #[arg(long)]
    pub close: bool,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("bandwidth").required(true).args(["lambda", "lambda_auto"])))]
pub struct GramArgs {
    /// Dataset bundle directory.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Kernel bandwidth.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Estimate the bandwidth from the spread of the atom centers.
    #[arg(long)]
    pub lambda_auto: bool,
    /// Spread measure for --lambda-auto: rms or coordinate.
    #[arg(long, default_value = "rms")]
    pub lambda_mode: String,
    /// csv or bin; defaults to bin for a .bin output path, else csv.
    #[arg(long)]
    pub format: Option<String>,
    /// Skip atom pairs farther apart than this radius (at least 8 λ). Approximate.
    #[arg(long)]
    pub cutoff: Option<f64>,
    /// Fail unless the matrix is symmetric and positive semidefinite.
    #[arg(long)]
    pub check: bool,
    /// Output Gram file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct KMeansArgs {
    /// Independent restarts; the lowest objective wins.
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// kmeans++ or random.
    #[arg(long, default_value = "kmeans++")]
    pub init: String,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    /// Stop once an iteration lowers the objective by at most this much.
    #[arg(long, default_value_t = 0.0)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// Gram matrix file (CSV or binary).
    #[arg(long)]
    pub gram: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[command(flatten)]
    pub kmeans: KMeansArgs,
    /// JSON array with a starting assignment; implies a single run.
    #[arg(long)]
    pub init_assignment: Option<PathBuf>,
    /// Dataset bundle with planted labels; adds the adjusted Rand index to the output.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Output JSON file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub gram: PathBuf,
    /// Cluster JSON written by `cluster`.
    #[arg(long)]
    pub assignment: PathBuf,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub gram: PathBuf,
    #[arg(long)]
    pub k_min: usize,
    #[arg(long)]
    pub k_max: usize,
    #[command(flatten)]
    pub kmeans: KMeansArgs,
    /// Output CSV with columns k,W,silhouette.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("mode").required(true).args(["bands", "pooled"])))]
pub struct SizingArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Comma-separated half-open ranges, e.g. "1190-1250,1250-1310".
    #[arg(long)]
    pub bands: Option<String>,
    /// Metadata key the bands refer to.
    #[arg(long, default_value = "height")]
    pub band_key: String,
    #[arg(long, default_value_t = 2)]
    pub k_per_band: usize,
    /// Cluster the whole sample at once.
    #[arg(long, requires = "k")]
    pub pooled: bool,
    /// Number of sizes in pooled mode.
    #[arg(long)]
    pub k: Option<usize>,
    /// Metadata key used to order pooled sizes.
    #[arg(long)]
    pub sort_key: Option<String>,
    /// Fixed bandwidth instead of the per-group estimate.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value = "rms")]
    pub lambda_mode: String,
    #[command(flatten)]
    pub kmeans: KMeansArgs,
    /// Output prefix: writes PREFIX.json, PREFIX.csv and PREFIX.long.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scenario spec JSON.
    #[arg(long)]
    pub spec: PathBuf,
    /// Output bundle directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write each shape's geometry (CSV polyline or OFF mesh) under geometry/.
    #[arg(long)]
    pub export_geometry: bool,
}

/// Command failure, mapped to the process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad input, arguments or data: exit 1.
    Invalid(String),
    /// Output was written but the iteration limit was hit first: exit 2.
    NotConverged(String),
}

impl From<shape_currents::Error> for Failure {
    fn from(e: shape_currents::Error) -> Self {
        Failure::Invalid(e.to_string())
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("SHAPE_CURRENTS_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Invalid(format!("SHAPE_CURRENTS_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Invalid(e.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Ingest(a) => commands::ingest(&a),
        Command::Gram(a) => commands::gram(&a),
        Command::Cluster(a) => commands::cluster(&a),
        Command::Validate(a) => commands::validate(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Sizing(a) => commands::sizing(&a),
        Command::Synth(a) => commands::synth(&a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::NotConverged(msg)) => {
            eprintln!("warning: {msg}");
            ExitCode::from(2)
        }
    }
}
