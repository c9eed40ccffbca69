use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use tagtrust::eval::{ExperimentVariant, PrecisionDenominator};
use tagtrust::ingest::{FieldLayout, HeaderMode};
use tagtrust::scoring::{ImportancePool, SimilarityMode, TrustDenominator};

#[derive(Debug, Parser)]
#[command(name = "tagtrust", version, about = "Trust-aware recommendations from social tagging data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter and split a tag assignment file, build profiles and write a manifest.
    Ingest(RunConfig),
    /// Run the variant and neighborhood-size sweep and write a CSV report.
    Evaluate(RunConfig),
    /// Print the top-N items for one user.
    Recommend(RecommendArgs),
    /// Turn a CSV report into whitespace-separated columns for gnuplot.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct RunConfig {
    /// Tag assignment file, one `user item tag [timestamp]` row per line.
    #[arg(long, env = "TAGTRUST_INPUT")]
    pub input: Option<PathBuf>,

    #[command(flatten)]
    pub layout: LayoutArgs,

    /// Drop items tagged by fewer distinct users.
    #[arg(long, default_value_t = 2)]
    pub min_taggers: usize,

    /// Share of each user's transactions held out for testing.
    #[arg(long, default_value_t = 0.2, value_parser = parse_fraction)]
    pub test_fraction: f64,

    #[arg(long, default_value_t = 42)]
    pub seed: u64,

    /// Weight of similarity against trust when ranking neighbors.
    #[arg(long, default_value_t = 0.5, value_parser = parse_lambda)]
    pub lambda: f64,

    /// Neighborhood sizes to sweep.
    #[arg(long, value_delimiter = ',', default_value = "5,10,15,20,25,30,35,40,45,50")]
    pub k_values: Vec<usize>,

    /// Length of each recommendation list.
    #[arg(long, default_value_t = 10)]
    pub top_n: usize,

    #[arg(
        long,
        value_delimiter = ',',
        value_parser = parse_variant,
        default_value = "basic,weighted,basic_trust,weighted_trust"
    )]
    pub variants: Vec<ExperimentVariant>,

    /// Population used for resource importance.
    #[arg(long, value_enum, default_value_t = PoolArg::Reduced)]
    pub eq6_pool: PoolArg,

    /// Divisor of the importance-weighted trust sum.
    #[arg(long, value_enum, default_value_t = DenominatorArg::Count)]
    pub eq7_denominator: DenominatorArg,

    #[arg(long, value_enum, default_value_t = SimilarityArg::Matrix)]
    pub similarity_mode: SimilarityArg,

    #[arg(long, value_enum, default_value_t = PrecisionArg::FixedN)]
    pub precision_denominator: PrecisionArg,

    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    pub shard_count: u64,

    /// `file` persists profiles under --store-dir; `memory` rebuilds them
    /// from --input on every command.
    #[arg(long, value_enum, default_value_t = BackendArg::File)]
    pub store_backend: BackendArg,

    #[arg(long, default_value = "tagtrust-store")]
    pub store_dir: PathBuf,

    /// Report destination; standard output when absent.
    #[arg(long, env = "TAGTRUST_OUTPUT")]
    pub output: Option<PathBuf>,

    /// Worker threads for evaluation. Defaults to the number of cores.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: Option<u64>,
}

#[derive(Debug, Args)]
pub struct LayoutArgs {
    #[arg(long, default_value_t = 0)]
    pub user_col: usize,
    #[arg(long, default_value_t = 1)]
    pub item_col: usize,
    #[arg(long, default_value_t = 2)]
    pub tag_col: usize,
    /// Timestamp column; pass `none` when the file has no timestamps.
    #[arg(long, default_value = "3", value_parser = parse_optional_column)]
    pub timestamp_col: std::option::Option<usize>,
    #[arg(long, value_enum, default_value_t = HeaderArg::Auto)]
    pub header: HeaderArg,
}

impl LayoutArgs {
    pub fn layout(&self) -> FieldLayout {
        FieldLayout {
            user: self.user_col,
            item: self.item_col,
            tag: self.tag_col,
            timestamp: self.timestamp_col,
        }
    }
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    #[arg(long)]
    pub user: String,

    #[arg(long, value_parser = parse_variant, default_value = "weighted_trust")]
    pub variant: ExperimentVariant,

    /// Number of neighbors to score with.
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,

    #[command(flatten)]
    pub run: RunConfig,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// CSV report written by `evaluate`.
    #[arg(long)]
    pub report: PathBuf,

    #[arg(long, value_enum, default_value_t = Metric::Recall)]
    pub metric: Metric,

    #[arg(long, env = "TAGTRUST_OUTPUT")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PoolArg {
    Reduced,
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DenominatorArg {
    Count,
    #[value(name = "importance-sum", alias = "importance_sum")]
    ImportanceSum,
}

impl From<DenominatorArg> for TrustDenominator {
    fn from(d: DenominatorArg) -> Self {
        match d {
            DenominatorArg::Count => TrustDenominator::TransactionCount,
            DenominatorArg::ImportanceSum => TrustDenominator::ImportanceSum,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimilarityArg {
    Matrix,
    Strict,
}

impl From<SimilarityArg> for SimilarityMode {
    fn from(s: SimilarityArg) -> Self {
        match s {
            SimilarityArg::Matrix => SimilarityMode::Matrix,
            SimilarityArg::Strict => SimilarityMode::Strict,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PrecisionArg {
    FixedN,
    ListLength,
}

impl From<PrecisionArg> for PrecisionDenominator {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::FixedN => PrecisionDenominator::FixedN,
            PrecisionArg::ListLength => PrecisionDenominator::ListLength,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendArg {
    Memory,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HeaderArg {
    Auto,
    Present,
    Absent,
}

impl From<HeaderArg> for HeaderMode {
    fn from(h: HeaderArg) -> Self {
        match h {
            HeaderArg::Auto => HeaderMode::Auto,
            HeaderArg::Present => HeaderMode::Present,
            HeaderArg::Absent => HeaderMode::Absent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Recall,
    Precision,
    Coverage,
}

impl PoolArg {
    /// The global pool needs the user count, which is only known after
    /// ingest.
    pub fn resolve(self, total_users: usize) -> ImportancePool {
        match self {
            PoolArg::Reduced => ImportancePool::Reduced,
            PoolArg::Global => ImportancePool::Global { total_users },
        }
    }
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    let f: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..1.0).contains(&f) {
        Ok(f)
    } else {
        Err("must be in [0, 1)".into())
    }
}

fn parse_lambda(s: &str) -> Result<f64, String> {
    let f: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&f) {
        Ok(f)
    } else {
        Err("must be in [0, 1]".into())
    }
}

fn parse_variant(s: &str) -> Result<ExperimentVariant, String> {
    s.trim().parse().map_err(|e: tagtrust::Error| e.to_string())
}

fn parse_optional_column(s: &str) -> Result<Option<usize>, String> {
    if s.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|e| format!("{e}"))
}
