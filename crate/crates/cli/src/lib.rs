//! Library side of the `simam` command-line tool.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub mod commands;

/// Exit codes.
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_INGEST: u8 = 3;
pub const EXIT_FIT: u8 = 4;
pub const EXIT_SHAPE: u8 = 5;

#[derive(Parser)]
#[command(name = "simam", version, about = "Sparse monotone single-index network estimation")]
pub struct Cli {
    /// Worker threads (defaults to the number of available cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Simulate a series from a random sparse network.
    Simulate(SimulateArgs),
    /// Fit the network to a series.
    Fit(FitArgs),
    /// One-step-ahead predictions with a fitted model.
    Predict(PredictArgs),
    /// Run a simulation study.
    Experiment(ExperimentArgs),
    /// Cluster or rank the nodes of a fitted network.
    Cluster(ClusterArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignPreset {
    Sim9,
    Predict9,
    Sim36,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkKind {
    ScaledLogistic,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Number of nodes.
    #[arg(long = "M", alias = "m", conflicts_with = "paper_design")]
    pub nodes: Option<usize>,
    /// Number of transitions; the series has T + 1 rows.
    #[arg(long = "T", alias = "t")]
    pub transitions: usize,
    /// Nonzeros per column of the true network (default min(3, M)).
    #[arg(long, conflicts_with = "paper_design")]
    pub s_star: Option<usize>,
    /// `gaussian:SIGMA` or `uniform:HALF_WIDTH`.
    #[arg(long, default_value = "gaussian:0.05")]
    pub noise: String,
    #[arg(long, value_enum, default_value_t = LinkKind::ScaledLogistic)]
    pub links: LinkKind,
    /// Link index of node 0; node j uses index first + j.
    #[arg(long, default_value_t = 1, conflicts_with = "paper_design")]
    pub first_link: u32,
    #[arg(long, value_enum)]
    pub paper_design: Option<DesignPreset>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Writes PREFIX.csv, PREFIX.truth.json and PREFIX.manifest.json.
    #[arg(long)]
    pub out_prefix: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    Paper,
    Lasso,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Integer, or `lasso-cv` to take each node's cross-validated LASSO support size.
    #[arg(long, default_value = "4")]
    pub sparsity: String,
    #[arg(long, default_value_t = 0.1)]
    pub step_size: f64,
    #[arg(long, default_value_t = 2000)]
    pub max_iters: usize,
    #[arg(long, value_enum, default_value_t = InitKind::Paper)]
    pub init: InitKind,
    /// `FRACTION,PATIENCE`, e.g. `0.1,10`.
    #[arg(long)]
    pub early_stop: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Fit on this leading share of the transitions.
    #[arg(long, default_value_t = 1.0)]
    pub train_frac: f64,
    /// Store every iterate in the model diagnostics.
    #[arg(long)]
    pub record_iterates: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Predictions CSV; row t predicts input row t + 1.
    #[arg(long)]
    pub out: PathBuf,
    /// Metrics JSON (defaults to OUT with `.metrics.json` appended).
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentPreset {
    Convergence,
    Predict9,
    Predict36,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    Desk,
    Paper,
}

#[derive(Debug, Args, Serialize)]
pub struct ExperimentArgs {
    #[arg(long, value_enum)]
    pub preset: ExperimentPreset,
    /// Defaults: 20 at desk scale; 100 (convergence) or 50 (prediction) at paper scale.
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Scale::Desk)]
    pub scale: Scale,
    /// Noise law for the prediction presets.
    #[arg(long, default_value = "gaussian:0.05")]
    pub noise: String,
    /// Override the iteration budget of the preset.
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[command(group(ArgGroup::new("mode").required(true).args(["k_clusters", "rank_influence"])))]
pub struct ClusterArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Spectral clustering of the or-symmetrized network into K groups.
    #[arg(long)]
    pub k_clusters: Option<usize>,
    /// Rank nodes by row sum of the network instead of clustering.
    #[arg(long)]
    pub rank_influence: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// A failure with its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return u8::try_from(e.exit_code()).unwrap_or(EXIT_USAGE);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return EXIT_USAGE;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    }
    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Fit(a) => commands::fit(a),
        Command::Predict(a) => commands::predict(a),
        Command::Experiment(a) => commands::experiment(a),
        Command::Cluster(a) => commands::cluster(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
