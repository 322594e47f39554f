use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "condsel",
    version,
    about = "Select target-relevant subsets of a large source dataset from embeddings"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Seed for every random choice [default: 42]
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads (default: all available cores)
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,

    /// Write a run report (TOML) to this path
    #[arg(long, global = true, value_name = "PATH")]
    pub report: Option<PathBuf>,

    /// Only log errors
    #[arg(long, global = true, conflicts_with = "debug")]
    pub quiet: bool,

    /// Log every resolved parameter
    #[arg(long, global = true)]
    pub debug: bool,
}

impl GlobalOpts {
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }
}

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cluster target embeddings and save the centers
    Kmeans(KmeansArgs),
    /// Score the source and keep the budget most target-like rows
    #[command(subcommand)]
    Filter(FilterCommand),
    /// Chained pre-training over a plan of target tasks
    #[command(subcommand)]
    Sequential(SequentialCommand),
    /// Pre-training cost estimates
    Cost(CostArgs),
    /// Generate Gaussian-mixture embeddings from a spec file
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct KmeansArgs {
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long, default_value_t = condsel::kmeans::DEFAULT_K)]
    pub k: usize,
    #[arg(long, default_value_t = condsel::kmeans::DEFAULT_MAX_ITERS)]
    pub max_iters: usize,
    #[arg(long, default_value_t = condsel::kmeans::DEFAULT_REL_TOL)]
    pub rel_tol: f64,
    #[arg(long, default_value_t = condsel::kmeans::DEFAULT_N_INIT)]
    pub n_init: usize,
    /// Centers as EMB1
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FilterIo {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    /// Number of source rows to keep
    #[arg(long)]
    pub budget: usize,
    /// Selected row indices, one per line (default: standard output)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write every source row's score, one per line
    #[arg(long, value_name = "PATH")]
    pub scores: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Agg {
    Avg,
    Min,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EntropyModeArg {
    Active,
    Inverse,
}

#[derive(Debug, Args)]
pub struct TrainOpts {
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.2)]
    pub val_fraction: f64,
    /// Held-out accuracy band that stops training
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [0.92, 0.95])]
    pub band: Vec<f64>,
}

#[derive(Debug, Subcommand)]
pub enum FilterCommand {
    /// Distance to K-means centers of the target
    Cluster {
        #[command(flatten)]
        io: FilterIo,
        #[arg(long, default_value_t = condsel::kmeans::DEFAULT_K)]
        k: usize,
        #[arg(long, value_enum, default_value = "min")]
        agg: Agg,
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..=2))]
        p: u32,
        #[arg(long, default_value_t = condsel::kmeans::DEFAULT_N_INIT)]
        n_init: usize,
        /// Save the fitted centers as EMB1
        #[arg(long, value_name = "PATH")]
        centers: Option<PathBuf>,
    },
    /// Probability of the target domain under a source-vs-target classifier
    Domain {
        #[command(flatten)]
        io: FilterIo,
        #[command(flatten)]
        train: TrainOpts,
        /// Save the trained classifier (TOML)
        #[arg(long, value_name = "PATH")]
        classifier: Option<PathBuf>,
    },
    /// Prediction entropy of a classifier trained on the labelled target
    Entropy {
        #[command(flatten)]
        io: FilterIo,
        /// LBL1 class labels for the target rows
        #[arg(long)]
        target_labels: PathBuf,
        #[arg(long, value_enum, default_value = "active")]
        mode: EntropyModeArg,
        #[command(flatten)]
        train: TrainOpts,
        #[arg(long, value_name = "PATH")]
        classifier: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TrainerKind {
    /// Nearest-prototype model over embeddings
    Proxy,
    /// Records calls and trains nothing
    Mock,
}

#[derive(Debug, Args)]
pub struct SequentialOpts {
    /// TOML plan with one [[task]] table per target task
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long, value_enum, default_value = "proxy")]
    pub trainer: TrainerKind,
    #[arg(long, default_value_t = 8)]
    pub prototypes: usize,
    /// K for cluster-based tasks
    #[arg(long, default_value_t = condsel::kmeans::DEFAULT_K)]
    pub k: usize,
    #[command(flatten)]
    pub train: TrainOpts,
}

#[derive(Debug, Subcommand)]
pub enum SequentialCommand {
    /// Run the plan, writing per-task selections, reports and state digests
    Run {
        #[command(flatten)]
        opts: SequentialOpts,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Compare chained epochs against training every task from scratch
    Compare {
        #[command(flatten)]
        opts: SequentialOpts,
        #[arg(long, default_value_t = condsel::sequential::DEFAULT_INDEPENDENT_EPOCHS)]
        independent_epochs: u32,
    },
}

#[derive(Debug, Args)]
#[command(args_conflicts_with_subcommands = true, subcommand_negates_reqs = true)]
pub struct CostArgs {
    #[command(subcommand)]
    pub command: Option<CostCommand>,
    #[command(flatten)]
    pub estimate: EstimateArgs,
}

#[derive(Debug, Subcommand)]
pub enum CostCommand {
    /// Estimate hours for every (images, epochs, resolution) combination
    Estimate(EstimateArgs),
    /// Fit a profile to observed runs
    Calibrate(CalibrateArgs),
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Image counts, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    pub images: Vec<u64>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub epochs: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "224")]
    pub resolution: Vec<u32>,
    /// Cost profile written by `cost calibrate` (default: fitted to full ImageNet runs)
    #[arg(long)]
    pub profile: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OverheadArg {
    Fixed,
    PerImageEpoch,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Observed run as IMAGES,EPOCHS,RESOLUTION,HOURS; repeat for each run
    #[arg(long = "obs", value_name = "I,E,R,H")]
    pub observations: Vec<String>,
    /// Add the full supervised ImageNet runs (224px 170 h, 112px 100 h)
    #[arg(long)]
    pub imagenet: bool,
    #[arg(long, value_enum, default_value = "per-image-epoch")]
    pub overhead: OverheadArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Mixture spec (TOML); its own seed is used unless --seed is given
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Component index of each row as LBL1
    #[arg(long)]
    pub labels: Option<PathBuf>,
}
