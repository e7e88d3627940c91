use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kantrust::interpret::{DEFAULT_FIDELITY_BINS, DEFAULT_PDP_POINTS};
use kantrust::kan::{DEFAULT_DEGREE, DEFAULT_GRID, DEFAULT_HIDDEN};
use kantrust::Format;

#[derive(Debug, Parser)]
#[command(
    name = "kantrust",
    version,
    about = "Spline surrogate of detector confidence with interpretability reports"
)]
pub struct Cli {
    /// Seed for every random choice (initialization, shuffling, synthesis).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Interchange format; inferred from the file extension when omitted.
    #[arg(long, global = true, value_enum)]
    pub format: Option<FormatArg>,

    /// Directory for command outputs.
    #[arg(long, global = true)]
    pub outdir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Jsonl,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Format {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Jsonl => Format::Jsonl,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate an interchange file and print a summary.
    Ingest {
        input: PathBuf,
        /// Write the validated records here (format from the extension).
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Fit a surrogate and write the model file and training history.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Model path; defaults to `<outdir>/model.kan`.
        #[arg(long)]
        model: Option<PathBuf>,
        /// History CSV path; defaults to `<model stem>_history.csv`.
        #[arg(long)]
        history: Option<PathBuf>,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Write the full interpretability bundle for a model over a dataset.
    Analyze {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
    /// Flag low-trust detections.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        trust: TrustArgs,
        /// Verdict CSV path; defaults to `<outdir>/verdicts.csv`.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Export partial dependence curves.
    Pdp {
        #[arg(long)]
        model: PathBuf,
        /// Background data the curves average over.
        #[arg(long)]
        data: PathBuf,
        /// Feature name, or `all`.
        #[arg(long, default_value = "all")]
        feature: String,
        #[arg(long, default_value_t = DEFAULT_PDP_POINTS)]
        points: usize,
    },
    /// Export learned edge functions.
    Splines {
        #[arg(long)]
        model: PathBuf,
        /// Hidden unit index; all units when omitted.
        #[arg(long)]
        unit: Option<usize>,
        /// Feature name, or `all`.
        #[arg(long, default_value = "all")]
        feature: String,
        #[arg(long, default_value_t = DEFAULT_PDP_POINTS)]
        points: usize,
    },
    /// Run ingest, train, analyze and score into the output directory.
    Report {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        analysis: AnalysisArgs,
        #[command(flatten)]
        trust: TrustArgs,
    },
    /// Generate a synthetic detection file.
    Synth {
        #[arg(long, short, default_value_t = 1000)]
        n: usize,
        /// Attach a caption to every record.
        #[arg(long)]
        captions: bool,
        #[arg(long, short)]
        output: PathBuf,
    },
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.2)]
    pub val_fraction: f64,
    #[arg(long, default_value_t = 0.0)]
    pub l2: f64,
    #[arg(long, default_value_t = DEFAULT_HIDDEN)]
    pub hidden: usize,
    #[arg(long, default_value_t = DEFAULT_GRID)]
    pub grid: usize,
    #[arg(long, default_value_t = DEFAULT_DEGREE)]
    pub degree: usize,
    /// Train against this extra data column instead of `conf`.
    #[arg(long)]
    pub target_column: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct AnalysisArgs {
    #[arg(long, default_value_t = DEFAULT_PDP_POINTS)]
    pub pdp_points: usize,
    #[arg(long, default_value_t = DEFAULT_PDP_POINTS)]
    pub spline_points: usize,
    #[arg(long, default_value_t = DEFAULT_FIDELITY_BINS)]
    pub bins: usize,
    /// Scale edge importance by the output weight magnitude.
    #[arg(long)]
    pub edge_scale_by_weight: bool,
}

#[derive(Debug, Clone, Args)]
pub struct TrustArgs {
    /// Residual threshold; defaults to 3x the stored validation RMSE.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Minimum conf-bin R² before a bin counts as low fidelity.
    #[arg(long)]
    pub r_min: Option<f64>,
}
