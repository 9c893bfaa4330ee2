use std::path::PathBuf;

use cdawg::novelty::BinMode;
use cdawg::{Backend, CorpusFormat};
use clap::{Args, Parser, Subcommand, ValueEnum};

pub const INDEX_ENV: &str = "CDAWG_INDEX_DIR";

#[derive(Parser, Debug)]
#[command(
    name = "cdawg",
    version,
    about = "Build CDAWG corpus indexes and measure n-gram novelty against them"
)]
pub struct Cli {
    /// Only report warnings and errors on stderr.
    #[arg(short, long, global = true)]
    pub quiet: bool,

    /// More progress detail (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Index a tokenized corpus, optionally split into document-aligned shards.
    Build(BuildArgs),
    /// Print size statistics of an index.
    Stats(StatsArgs),
    /// Annotate query documents with per-position NNSL and frequencies.
    Query(QueryArgs),
    /// Compute n-novelty curves from annotations.
    Novelty(NoveltyArgs),
    /// Mean, max and median NNSL from annotations.
    NnslStats(NnslStatsArgs),
    /// Entropy lower bound on the fraction of novel n-grams.
    Bound(BoundArgs),
    /// Bin per-token losses by In-Train / Not-in-Train condition and frequency.
    LossBins(LossBinsArgs),
    /// Check an index's files and invariants, optionally against the brute-force oracle.
    Verify(VerifyArgs),
}

#[derive(Args, Debug, Clone)]
pub struct IndexArgs {
    /// Index directory (or its manifest.json).
    #[arg(long, env = INDEX_ENV)]
    pub index: PathBuf,

    /// How shard files are accessed.
    #[arg(long, default_value = "ram")]
    pub backend: Backend,
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    /// Tokenized corpus file.
    #[arg(long)]
    pub input: PathBuf,

    /// binary-u16, binary-u32, jsonl or char-text.
    #[arg(long)]
    pub format: CorpusFormat,

    /// Document separator token id.
    #[arg(long, default_value_t = 0)]
    pub separator: u32,

    /// Vocabulary size; defaults depend on the format.
    #[arg(long)]
    pub vocab_size: Option<u32>,

    /// Output directory for shard files and the manifest.
    #[arg(long, env = INDEX_ENV)]
    pub out: PathBuf,

    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub shards: u64,

    /// Worker threads for shard builds.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub parallelism: u64,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[command(flatten)]
    pub index: IndexArgs,
}

#[derive(Args, Debug)]
pub struct QueryArgs {
    #[command(flatten)]
    pub index: IndexArgs,

    /// JSONL documents {"id", "tokens"}; `-` for stdin.
    #[arg(long, default_value = "-")]
    pub input: PathBuf,

    /// Annotation JSONL output; `-` for stdout.
    #[arg(long, default_value = "-")]
    pub output: PathBuf,

    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub parallelism: u64,

    /// Query separator tokens as-is instead of dropping them.
    #[arg(long)]
    pub keep_separators: bool,

    /// Recompute every document with the brute-force oracle and fail on mismatch.
    #[arg(long)]
    pub verify: bool,

    /// Largest corpus (in tokens) for which --verify runs the oracle.
    #[arg(long, default_value_t = 200_000)]
    pub verify_limit: u64,
}

#[derive(Clone, Copy, Debug, Default, ValueEnum)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Args, Debug)]
pub struct NoveltyArgs {
    /// Annotation JSONL from `query`; `-` for stdin.
    #[arg(long, default_value = "-")]
    pub annotations: PathBuf,

    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_n: u64,

    #[arg(long, value_enum, default_value_t)]
    pub format: OutputFormat,
}

#[derive(Args, Debug)]
pub struct NnslStatsArgs {
    /// Annotation JSONL from `query`; `-` for stdin.
    #[arg(long, default_value = "-")]
    pub annotations: PathBuf,
}

#[derive(Args, Debug)]
pub struct BoundArgs {
    /// Corpus size |C| in tokens.
    #[arg(long)]
    pub corpus_size: f64,

    /// Probability mass of tokens with at least the given entropy (1 for the warmup bound).
    #[arg(long, default_value_t = 1.0)]
    pub p: f64,

    /// Per-token entropy in bits.
    #[arg(long)]
    pub entropy_bits: f64,

    #[arg(long, default_value_t = 1)]
    pub n_min: u64,

    #[arg(long, default_value_t = 64)]
    pub n_max: u64,

    /// Report the first n whose bound reaches this value.
    #[arg(long, default_value_t = 0.99)]
    pub threshold: f64,

    #[arg(long, value_enum, default_value_t)]
    pub format: OutputFormat,
}

#[derive(Args, Debug)]
pub struct LossBinsArgs {
    #[command(flatten)]
    pub index: IndexArgs,

    /// JSONL documents {"id", "tokens"}.
    #[arg(long)]
    pub input: PathBuf,

    /// JSONL per-token values {"id", "losses", "metric"?}.
    #[arg(long)]
    pub losses: PathBuf,

    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_n: u64,

    /// Comma-separated frequency bucket edges; powers of ten by default.
    #[arg(long, value_delimiter = ',')]
    pub bin_edges: Option<Vec<u64>>,

    /// per-n, or exactly-one to give each token a single n per condition.
    #[arg(long, default_value = "per-n")]
    pub mode: BinMode,

    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub parallelism: u64,

    #[arg(long, value_enum, default_value_t)]
    pub format: OutputFormat,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub index: IndexArgs,

    /// Also compare query results for these JSONL documents with the oracle.
    #[arg(long)]
    pub input: Option<PathBuf>,

    /// Largest corpus (in tokens) for which the oracle runs.
    #[arg(long, default_value_t = 200_000)]
    pub verify_limit: u64,
}
