use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use revkit::corpus::{FilterConfig, SourceDataset, Split};
use revkit::model::{AnnotationMode, ContextMode, EngineConfig, QualityMetric};

#[derive(Debug, Parser)]
#[command(name = "revkit", version, about = "Iterative, intent-aware text revision toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Report how many pairs of a raw corpus the length/similarity filter drops
    Filter(FilterArgs),
    /// Build unified JSONL records from a raw corpus
    Ingest(IngestArgs),
    /// Sentence and edit counts per intent and source group
    Stats(StatsArgs),
    /// Annotate editable spans in documents
    Detect(DetectArgs),
    /// Run one revision round per document
    Revise(RunArgs),
    /// Revise documents until a stopping criterion fires
    Iterate(RunArgs),
    /// Score hypotheses or detector labels
    Eval(EvalArgs),
    /// Intent transition flows from revision traces
    Flows(FlowsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DatasetArg {
    Iterater,
    Nucle,
    Lang8,
    Discofuse,
    Newsela,
    Wikilarge,
    SplitRephrase,
    Gyafc,
}

impl From<DatasetArg> for SourceDataset {
    fn from(d: DatasetArg) -> Self {
        match d {
            DatasetArg::Iterater => SourceDataset::Iterater,
            DatasetArg::Nucle => SourceDataset::Nucle,
            DatasetArg::Lang8 => SourceDataset::Lang8,
            DatasetArg::Discofuse => SourceDataset::Discofuse,
            DatasetArg::Newsela => SourceDataset::Newsela,
            DatasetArg::Wikilarge => SourceDataset::Wikilarge,
            DatasetArg::SplitRephrase => SourceDataset::SplitRephrase,
            DatasetArg::Gyafc => SourceDataset::Gyafc,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Valid,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Valid => Split::Valid,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Args)]
pub struct FilterFlags {
    #[arg(long, default_value_t = 0.5)]
    pub min_len_ratio: f64,
    #[arg(long, default_value_t = 2.0)]
    pub max_len_ratio: f64,
    #[arg(long, default_value_t = 0.35)]
    pub min_char_similarity: f64,
}

impl FilterFlags {
    pub fn config(&self) -> FilterConfig {
        FilterConfig {
            min_len_ratio: self.min_len_ratio,
            max_len_ratio: self.max_len_ratio,
            min_char_similarity: self.min_char_similarity,
        }
    }
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long, value_enum)]
    pub dataset: DatasetArg,
    /// Raw corpus: JSON lines for iterater, `before<TAB>after` otherwise
    #[arg(long = "in")]
    pub input: PathBuf,
    #[command(flatten)]
    pub filter: FilterFlags,
    /// Also write one JSON line per discarded pair here
    #[arg(long)]
    pub discarded: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long, value_enum)]
    pub dataset: DatasetArg,
    #[arg(long, value_enum, default_value = "train")]
    pub split: SplitArg,
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Records output (JSONL); standard output if omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub filter: FilterFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StatsFormat {
    Table,
    Json,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Record files produced by `ingest`
    #[arg(long = "in", required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "table")]
    pub format: StatsFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Rules,
    Remote,
}

#[derive(Debug, Args)]
pub struct BackendFlags {
    #[arg(long, value_enum, default_value = "rules")]
    pub backend: BackendKind,
    /// Rule table for the rules backend
    #[arg(long, required_if_eq("backend", "rules"))]
    pub rules: Option<PathBuf>,
    /// Model server base URL for the remote backend
    #[arg(long, env = "REVKIT_ENDPOINT", required_if_eq("backend", "remote"))]
    pub endpoint: Option<String>,
    /// Remote request timeout in seconds
    #[arg(long, default_value_t = 60)]
    pub timeout: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ContextArg {
    SingleSentence,
    MultiSentence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AnnotationArg {
    SpanTags,
    SentencePrefix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GuardArg {
    Sari,
    Bleu,
    RougeL,
}

#[derive(Debug, Args)]
pub struct EngineFlags {
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_depth: u64,
    #[arg(long, value_enum, default_value = "single-sentence")]
    pub context: ContextArg,
    #[arg(long, value_enum, default_value = "span-tags")]
    pub annotation: AnnotationArg,
    /// Stop when this metric against the document references drops
    #[arg(long, value_enum)]
    pub quality_guard: Option<GuardArg>,
    /// Skip sentences the detector's sentence head marks as fine
    #[arg(long)]
    pub gate_on_needs_edit: bool,
}

impl EngineFlags {
    pub fn config(&self) -> EngineConfig {
        EngineConfig {
            max_depth: self.max_depth as usize,
            context_mode: match self.context {
                ContextArg::SingleSentence => ContextMode::SingleSentence,
                ContextArg::MultiSentence => ContextMode::MultiSentence,
            },
            annotation_mode: match self.annotation {
                AnnotationArg::SpanTags => AnnotationMode::SpanTags,
                AnnotationArg::SentencePrefix => AnnotationMode::SentencePrefix,
            },
            quality_guard: self.quality_guard.map(|g| match g {
                GuardArg::Sari => QualityMetric::Sari,
                GuardArg::Bleu => QualityMetric::Bleu,
                GuardArg::RougeL => QualityMetric::RougeL,
            }),
            gate_on_needs_edit: self.gate_on_needs_edit,
        }
    }
}

#[derive(Debug, Args)]
pub struct ParallelFlags {
    /// Documents processed concurrently; output keeps input order
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub jobs: u64,
    /// Reserved for sampling revisers; the pipeline itself is deterministic
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub backend: BackendFlags,
    #[command(flatten)]
    pub engine: EngineFlags,
    #[command(flatten)]
    pub parallel: ParallelFlags,
    /// Documents as JSON lines `{doc_id, text}`; standard input if omitted
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub backend: BackendFlags,
    #[command(flatten)]
    pub engine: EngineFlags,
    #[command(flatten)]
    pub parallel: ParallelFlags,
    /// Documents as JSON lines `{doc_id, text, references?, group?}`;
    /// standard input if omitted
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Bleu,
    RougeL,
    Sari,
    TokenF1,
    All,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_enum, default_value = "all")]
    pub metric: MetricArg,
    /// Source sentences, one per line
    #[arg(long)]
    pub src: Option<PathBuf>,
    /// Hypotheses, one per line
    #[arg(long)]
    pub hyp: Option<PathBuf>,
    /// Reference file, line-aligned with --hyp; repeat for more references
    #[arg(long = "ref")]
    pub refs: Vec<PathBuf>,
    /// Gold token labels, one sequence per line (JSON array or space separated)
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// Predicted token labels, same layout as --gold
    #[arg(long)]
    pub pred: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FlowFormat {
    Sankey,
    Csv,
}

#[derive(Debug, Args)]
pub struct FlowsArgs {
    /// Traces written by `iterate`
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "sankey")]
    pub format: FlowFormat,
    /// One matrix per trace group
    #[arg(long)]
    pub by_group: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
