use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use gcbm::config::{LabelMode, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "gcbm",
    version,
    about = "WL-subtree concept bottleneck models for graph classification"
)]
pub struct Cli {
    /// Log level filter (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "info")]
    pub log: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mine WL-subtree concepts of the whole dataset and write the concept artifact.
    Extract(ExtractArgs),
    /// Cross-validate the bottlenecked classifier and write per-fold checkpoints.
    Train(TrainArgs),
    /// Export the classifier's weight flows and key-concept subgraphs.
    Explain(ExplainArgs),
    /// Apply a weight-level intervention plan to a checkpoint.
    Intervene(InterveneArgs),
    /// Serve a checkpoint over HTTP for interactive inspection.
    Serve(ServeArgs),
}

/// Run configuration: a JSON file, then flag overrides.
#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// JSON run configuration; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory holding the TU dataset folder.
    #[arg(long)]
    pub data_root: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<String>,
    /// Maximum WL-subtree height K.
    #[arg(long)]
    pub max_height: Option<usize>,
    /// Concepts selected per level, M.
    #[arg(long)]
    pub concepts_per_level: Option<usize>,
    #[arg(long)]
    pub embedder: Option<LabelMode>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lambda_c: Option<f64>,
    #[arg(long)]
    pub lambda_r: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

impl RunArgs {
    pub fn resolve(&self) -> gcbm::Result<RunConfig> {
        let mut config: RunConfig = match &self.config {
            Some(path) => gcbm::artifact::read_json(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.data_root {
            config.dataset_root = v.clone();
        }
        if let Some(v) = &self.dataset {
            config.dataset_name = v.clone();
        }
        if let Some(v) = self.max_height {
            config.max_height = v;
        }
        if let Some(v) = self.concepts_per_level {
            config.concepts_per_level = v;
        }
        if let Some(v) = self.embedder {
            config.embedder = v;
        }
        if let Some(v) = self.folds {
            config.folds = v;
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.epochs {
            config.train.epochs = v;
        }
        if let Some(v) = self.lambda_c {
            config.train.lambda_c = v;
        }
        if let Some(v) = self.lambda_r {
            config.train.lambda_r = v;
        }
        if let Some(v) = self.learning_rate {
            config.train.learning_rate = v;
        }
        config.output_dir = self.out.clone();
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Args)]
pub struct ExtractArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Rows of the printed top-gain table per level.
    #[arg(long, default_value_t = 5)]
    pub show: usize,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
}

/// A checkpoint, its concept artifact and the dataset they were built from.
#[derive(Debug, Clone, Args)]
pub struct CheckpointArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Concept artifact; defaults to `concepts.json` beside the checkpoint.
    #[arg(long)]
    pub concepts: Option<PathBuf>,
    /// Overrides the dataset root recorded in the checkpoint.
    #[arg(long)]
    pub data_root: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub source: CheckpointArgs,
    /// Concepts per class in the weight-flow export.
    #[arg(long, default_value_t = 8)]
    pub top_t: usize,
    /// Key concepts per subgraph explanation, M_I; defaults to the run config.
    #[arg(long)]
    pub key_concepts: Option<usize>,
    #[arg(long, default_value = "out/explain")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitChoice {
    Train,
    Test,
}

impl SplitChoice {
    pub fn name(self) -> &'static str {
        match self {
            SplitChoice::Train => "train",
            SplitChoice::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct InterveneArgs {
    #[command(flatten)]
    pub source: CheckpointArgs,
    /// JSON intervention plan (`{"concepts": [...], "params": {...}}`).
    #[arg(long, conflicts_with = "concept")]
    pub plan: Option<PathBuf>,
    /// Bottleneck index to adjust; repeat for a joint plan.
    #[arg(long)]
    pub concept: Vec<usize>,
    /// Split used for target selection and re-evaluation.
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitChoice,
    #[arg(long, default_value = "out/intervene")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub source: CheckpointArgs,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Directory for the intervention transcript; nothing is written if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
