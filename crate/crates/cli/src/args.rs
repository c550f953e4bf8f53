use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use weaver_core::RelationKind;

#[derive(Debug, Parser)]
#[command(name = "weaver", version, about = "Build and explore concept knowledge bases for model testing")]
#[command(args_override_self = true, propagate_version = true)]
pub struct Cli {
    /// Debug logging on stderr (RUST_LOG overrides).
    #[arg(long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a knowledge base from a seed concept.
    Generate(GenerateArgs),
    /// Recommend children of a node in a saved knowledge base.
    Recommend(RecommendArgs),
    /// Measure recall against a ground-truth concept list.
    EvalRecall(EvalRecallArgs),
    /// Draw edges for precision labelling, or score a labelled sheet.
    SamplePrecision(SamplePrecisionArgs),
    /// Cluster concepts and count cluster hits.
    Cluster(ClusterArgs),
    /// Export the selected concepts of a stored session.
    Export(ExportArgs),
    /// Run the HTTP session server.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ProviderArgs {
    /// Use deterministic offline providers.
    #[arg(long)]
    pub mock: bool,
    /// OpenAI-compatible endpoint; the key is read from WEAVER_API_KEY.
    #[arg(long, env = "WEAVER_BASE_URL", default_value = "https://api.openai.com")]
    pub base_url: String,
    /// Generation model.
    #[arg(long, default_value = "gpt-4o-mini")]
    pub model: String,
    #[arg(long, value_enum, default_value_t = CompletionApi::Chat)]
    pub completion_api: CompletionApi,
    #[arg(long, default_value = "text-embedding-3-small")]
    pub embedding_model: String,
    /// Model used for perplexity scoring; must return prompt log-probabilities.
    #[arg(long, default_value = "davinci-002")]
    pub scoring_model: String,
    /// Maximum in-flight provider calls.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub parallelism: u64,
    /// Persist provider responses here and reuse them across runs.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CompletionApi {
    Chat,
    Completions,
}

#[derive(Debug, Clone, Args)]
pub struct EngineArgs {
    /// Concepts requested per relation.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub max_kb_size: Option<usize>,
    /// Number of layers generated up front.
    #[arg(long)]
    pub layers: Option<usize>,
    /// Comma-separated relation names for the first layer.
    #[arg(long, value_delimiter = ',')]
    pub relations_layer1: Option<Vec<RelationKind>>,
    /// Comma-separated relation names for later layers.
    #[arg(long, value_delimiter = ',')]
    pub relations_layer2: Option<Vec<RelationKind>>,
    /// Recommendations per node.
    #[arg(long)]
    pub k: Option<usize>,
    /// Relevance weight against diversity.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Extra recommendations per "more" request.
    #[arg(long)]
    pub k_growth: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Machine-readable JSON on stdout.
    #[arg(long)]
    pub json: bool,
    /// Write the main artifact here instead of stdout.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub seed: String,
    #[command(flatten)]
    pub engine: EngineArgs,
    #[command(flatten)]
    pub providers: ProviderArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    #[arg(long)]
    pub kb: PathBuf,
    /// Node whose children are ranked; defaults to the seed.
    #[arg(long, default_value_t = 0)]
    pub node: u64,
    #[command(flatten)]
    pub engine: EngineArgs,
    #[command(flatten)]
    pub providers: ProviderArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RecallMode {
    Automatic,
    ExportForManual,
}

#[derive(Debug, Args)]
pub struct EvalRecallArgs {
    #[arg(long)]
    pub kb: PathBuf,
    /// Ground truth, one concept per line.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, value_enum, default_value_t = RecallMode::Automatic)]
    pub mode: RecallMode,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub top_n: u64,
    #[arg(long, default_value_t = 0.8, allow_negative_numbers = true, value_parser = similarity)]
    pub sim_threshold: f64,
    /// Task name in the report; defaults to the truth file's stem.
    #[arg(long)]
    pub task: Option<String>,
    #[command(flatten)]
    pub providers: ProviderArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SamplePrecisionArgs {
    #[arg(long)]
    pub kb: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub rng_seed: u64,
    /// Score a labelled sheet instead of drawing a new one.
    #[arg(long, conflicts_with = "kb")]
    pub labeled: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// Concepts to cluster, one per line.
    #[arg(long, required_unless_present = "kb", conflicts_with = "kb")]
    pub labels: Option<PathBuf>,
    /// Cluster every concept of a knowledge base.
    #[arg(long)]
    pub kb: Option<PathBuf>,
    #[arg(long, default_value_t = 0.7, value_parser = positive)]
    pub threshold: f64,
    /// Explored concepts, one per line; reports the clusters they hit.
    #[arg(long)]
    pub explored: Option<PathBuf>,
    #[command(flatten)]
    pub providers: ProviderArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long, env = "WEAVER_DATA_DIR", default_value = "weaver-data")]
    pub data_dir: PathBuf,
    #[arg(long)]
    pub session: String,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "WEAVER_DATA_DIR", default_value = "weaver-data")]
    pub data_dir: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    /// Test suggestions per request unless the request says otherwise.
    #[arg(long)]
    pub suggestions: Option<usize>,
    #[command(flatten)]
    pub engine: EngineArgs,
    #[command(flatten)]
    pub providers: ProviderArgs,
}

fn similarity(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (-1.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err("must be within [-1, 1]".into())
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err("must be a positive number".into())
    }
}
