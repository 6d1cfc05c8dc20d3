//! Command-line flags and the optional TOML config file. A value given as a
//! flag replaces the file's value; the file replaces the built-in default.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use vgraph_core::hierarchy::CommunityTree;
use vgraph_core::training::{DecoderMode, SmoothnessTarget, TreeDecoder};
use vgraph_core::TrainConfig;

/// Directory consulted for relative dataset paths not found in the working directory.
pub const DATA_DIR_ENV: &str = "VGRAPH_DATA_DIR";

#[derive(Parser, Debug)]
#[command(name = "vgraph", version, about = "Joint community detection and node embedding")]
pub struct Cli {
    /// TOML file supplying defaults for the command's options.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Log progress to standard error.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit a model and write a checkpoint, loss history and run manifest.
    Train(TrainArgs),
    /// Extract communities and memberships from a checkpoint.
    Detect(DetectArgs),
    /// Score predicted communities or embeddings against ground truth.
    Eval(EvalArgs),
    /// Export an embedding table from a checkpoint.
    Embed(EmbedArgs),
    /// Generate a planted-partition graph with its ground truth.
    Synth(SynthArgs),
    /// Cross-check the fast computations against the slow reference ones.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Overlapping,
    Nonoverlapping,
    /// Per-level partitions of a tree model.
    Hierarchical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruthFormat {
    /// One community per line.
    Snap,
    /// A circle name, then its members (ego-network `.circles` files).
    Circles,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EmbeddingTable {
    Phi,
    Varphi,
    Psi,
}

#[derive(Args, Debug, Default)]
pub struct DataArgs {
    /// Edge list: two node labels per line, `#` comments.
    #[arg(long)]
    pub edges: Option<PathBuf>,
    /// Ground-truth communities; repeat once per level for tree models.
    #[arg(long)]
    pub truth: Vec<PathBuf>,
    #[arg(long, value_enum)]
    pub truth_format: Option<TruthFormat>,
    /// Node class labels, `node class` per line.
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct ModelArgs {
    /// Number of communities K.
    #[arg(short = 'k', long)]
    pub communities: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub decay: Option<f64>,
    #[arg(long)]
    pub decay_every: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    /// Ordered pairs per batch; 0 trains on every edge each step.
    #[arg(long)]
    pub batch_edges: Option<usize>,
    /// Smoothness weight; 0 disables the penalty.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub negatives: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub tau_final: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long, value_parser = parse_decoder)]
    pub decoder: Option<DecoderMode>,
    #[arg(long, value_parser = parse_smoothness)]
    pub smoothness: Option<SmoothnessTarget>,
    /// Branching factors of a community tree, e.g. `5,4`.
    #[arg(long)]
    pub tree: Option<String>,
    #[arg(long, value_parser = parse_tree_decoder)]
    pub tree_decoder: Option<TreeDecoder>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Assignment rule for the metrics reported when `--truth` is given.
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DetectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Use the last iterate instead of the lowest-loss parameters.
    #[arg(long)]
    pub final_params: bool,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Predicted communities; one file per level for hierarchical mode.
    #[arg(long)]
    pub pred: Vec<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Checkpoint whose `phi` embeddings are scored against `--labels`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 0.7)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Metrics JSON destination; the table always goes to standard output.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EmbedArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "phi")]
    pub table: EmbeddingTable,
    #[arg(long)]
    pub final_params: bool,
    /// TSV destination; standard output when absent.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    #[arg(short = 'k', long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 0.1)]
    pub p_in: f64,
    #[arg(long, default_value_t = 0.005)]
    pub p_out: f64,
    /// Nested blocks instead of a flat partition, e.g. `3,2`.
    #[arg(long)]
    pub tree: Option<String>,
    /// Link probability by deepest shared level, root first, e.g. `0.002,0.1,0.25`.
    #[arg(long, value_delimiter = ',')]
    pub probs: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Check a trained model; random instances are used otherwise.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub instances: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Edges sampled for the bound check on a checkpoint.
    #[arg(long, default_value_t = 200)]
    pub sample_edges: usize,
}

fn parse_decoder(s: &str) -> Result<DecoderMode, String> {
    match s {
        "auto" => Ok(DecoderMode::Auto),
        "full" | "full-softmax" | "full_softmax" => Ok(DecoderMode::FullSoftmax),
        "negative" | "negative-sampling" | "negative_sampling" => Ok(DecoderMode::NegativeSampling),
        _ => Err(format!("unknown decoder {s:?} (auto, full-softmax, negative-sampling)")),
    }
}

fn parse_smoothness(s: &str) -> Result<SmoothnessTarget, String> {
    match s {
        "prior" => Ok(SmoothnessTarget::Prior),
        "aggregated" => Ok(SmoothnessTarget::Aggregated),
        _ => Err(format!("unknown smoothness target {s:?} (prior, aggregated)")),
    }
}

fn parse_tree_decoder(s: &str) -> Result<TreeDecoder, String> {
    match s {
        "leaf" => Ok(TreeDecoder::Leaf),
        "path-sum" | "path_sum" => Ok(TreeDecoder::PathSum),
        _ => Err(format!("unknown tree decoder {s:?} (leaf, path-sum)")),
    }
}

/// Contents of `--config`. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub edges: Option<PathBuf>,
    pub truth: Vec<PathBuf>,
    pub truth_format: Option<TruthFormat>,
    pub labels: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub mode: Option<Mode>,
    pub tree: Option<String>,
    pub out: Option<PathBuf>,
    pub train: TrainConfig,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Data paths after merging flags over the file.
#[derive(Debug, Clone, Serialize)]
pub struct DataPaths {
    pub edges: Option<PathBuf>,
    pub truth: Vec<PathBuf>,
    pub truth_format: TruthFormat,
    pub labels: Option<PathBuf>,
}

impl DataPaths {
    pub fn merge(flags: &DataArgs, file: &FileConfig) -> Result<Self> {
        let truth = if flags.truth.is_empty() { &file.truth } else { &flags.truth };
        Ok(DataPaths {
            edges: flags.edges.clone().or_else(|| file.edges.clone()).map(resolve).transpose()?,
            truth: truth.iter().cloned().map(resolve).collect::<Result<_>>()?,
            truth_format: flags.truth_format.or(file.truth_format).unwrap_or(TruthFormat::Snap),
            labels: flags.labels.clone().or_else(|| file.labels.clone()).map(resolve).transpose()?,
        })
    }

    pub fn edges(&self) -> Result<&Path> {
        match &self.edges {
            Some(p) => Ok(p),
            None => bail!("an edge list is required (--edges)"),
        }
    }
}

/// Finds an input file, trying `$VGRAPH_DATA_DIR` for relative paths missing
/// from the working directory.
pub fn resolve(path: PathBuf) -> Result<PathBuf> {
    if path.exists() {
        return Ok(path);
    }
    if path.is_relative() {
        if let Some(dir) = std::env::var_os(DATA_DIR_ENV) {
            let alt = Path::new(&dir).join(&path);
            if alt.exists() {
                return Ok(alt);
            }
        }
    }
    bail!("input file {} does not exist", path.display())
}

pub fn parse_tree(spec: Option<&str>) -> Result<Option<CommunityTree>> {
    spec.map(|s| CommunityTree::parse(s).map_err(Into::into)).transpose()
}

/// Training settings: built-in defaults, then the file's `[train]` table, then flags.
pub fn merge_train(flags: &ModelArgs, file: &FileConfig) -> TrainConfig {
    let mut c = file.train.clone();
    macro_rules! set {
        ($($flag:ident => $field:ident),* $(,)?) => {
            $(if let Some(v) = flags.$flag { c.$field = v; })*
        };
    }
    set!(
        communities => communities,
        dim => dim,
        lr => lr0,
        decay => decay,
        decay_every => decay_every,
        iters => iters,
        batch_edges => batch_edges,
        lambda => lambda,
        negatives => negatives,
        tau => tau,
        seed => seed,
        eval_every => eval_every,
        decoder => decoder,
        smoothness => smoothness_target,
        tree_decoder => tree_decoder,
    );
    if flags.tau_final.is_some() {
        c.tau_final = flags.tau_final;
    }
    c
}

pub fn require_out(flag: &Option<PathBuf>, file: &FileConfig) -> Result<PathBuf> {
    match flag.clone().or_else(|| file.out.clone()) {
        Some(p) => Ok(p),
        None => bail!("an output location is required (--out)"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file: FileConfig = toml::from_str("[train]\ncommunities = 4\ndim = 8\nlambda = 1.0\n").unwrap();
        let flags = ModelArgs {
            dim: Some(16),
            ..ModelArgs::default()
        };
        let c = merge_train(&flags, &file);
        assert_eq!((c.communities, c.dim, c.lambda), (4, 16, 1.0));
        assert_eq!(c.iters, TrainConfig::default().iters);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<FileConfig>("edgez = \"a\"").is_err());
        assert!(toml::from_str::<FileConfig>("[train]\ncomunities = 3").is_err());
    }

    #[test]
    fn value_parsers() {
        assert_eq!(parse_decoder("full").unwrap(), DecoderMode::FullSoftmax);
        assert!(parse_decoder("nope").is_err());
        assert_eq!(parse_tree_decoder("path-sum").unwrap(), TreeDecoder::PathSum);
        assert_eq!(parse_smoothness("aggregated").unwrap(), SmoothnessTarget::Aggregated);
    }
}
