use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mave_core::SpanEnd;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "mave", version, about = "Multi-source attribute value extraction pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean raw product records into profiles.
    Clean(CleanArgs),
    /// Label profiles with the rule ensemble into positive and negative examples.
    Annotate(AnnotateArgs),
    /// Random 8:1:1 or zero-shot split of example files.
    Split(SplitArgs),
    /// Dataset statistics table.
    Stats(StatsArgs),
    /// Train the extraction model.
    Train(TrainArgs),
    /// Score predictions against gold examples.
    Eval(EvalArgs),
    /// Sample a k-shot training set per attribute.
    FewShot(FewShotArgs),
    /// Run a trained model over examples.
    Predict(PredictArgs),
    /// Generate a synthetic corpus with rules, category keywords and vocabulary.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SpanEndArg {
    Exclusive,
    Inclusive,
}

impl From<SpanEndArg> for SpanEnd {
    fn from(v: SpanEndArg) -> Self {
        match v {
            SpanEndArg::Exclusive => SpanEnd::Exclusive,
            SpanEndArg::Inclusive => SpanEnd::Inclusive,
        }
    }
}

/// Span end convention of example files read and written.
#[derive(Debug, Clone, Args, Serialize)]
pub struct SpanEndOpt {
    #[arg(long, value_enum, default_value = "exclusive")]
    pub span_end: SpanEndArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CleanArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub rejects: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AnnotateArgs {
    #[arg(long)]
    pub profiles: PathBuf,
    /// Extraction rules, one JSON object per line.
    #[arg(long)]
    pub rules: PathBuf,
    /// Category keyword definitions for the keyword classifier.
    #[arg(long)]
    pub categories: PathBuf,
    /// Category predictions below this probability are dropped.
    #[arg(long, default_value_t = mave_core::annotate::DEFAULT_CATEGORY_THRESHOLD)]
    pub threshold: f64,
    /// Maximum negatives kept per (category, attribute).
    #[arg(long, default_value_t = mave_core::annotate::DEFAULT_NEGATIVE_CAP)]
    pub cap: usize,
    /// Per-extractor miss and corruption rate of the simulated ensemble (0 = exact rules).
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_pos: PathBuf,
    #[arg(long)]
    pub out_neg: PathBuf,
    #[arg(long)]
    pub out_discard: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub span_end: SpanEndOpt,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SplitArgs {
    /// Comma-separated example files.
    #[arg(long = "in", value_delimiter = ',', required = true)]
    pub input: Vec<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value = "8:1:1")]
    pub ratios: String,
    /// Comma-separated attributes held out for a zero-shot split.
    #[arg(long, value_delimiter = ',')]
    pub holdout: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub span_end: SpanEndOpt,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct StatsArgs {
    #[arg(long = "in", value_delimiter = ',', required = true)]
    pub input: Vec<PathBuf>,
    /// Also write the report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub span_end: SpanEndOpt,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    /// `key = value` config file; the desk preset when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Config override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub train: Vec<PathBuf>,
    #[arg(long)]
    pub vocab: PathBuf,
    /// At most this many training examples, chosen by seeded hash.
    #[arg(long)]
    pub max_examples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub span_end: SpanEndOpt,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    /// Breakdowns: attribute, category, bucket.
    #[arg(long, value_delimiter = ',')]
    pub by: Vec<String>,
    /// Length bucket edges in words.
    #[arg(long, value_delimiter = ',', default_values_t = mave_core::evalkit::DEFAULT_LENGTH_EDGES)]
    pub edges: Vec<u64>,
    /// Directory for report.json and report.csv.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub span_end: SpanEndOpt,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FewShotArgs {
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub span_end: SpanEndOpt,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub span_end: SpanEndOpt,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 500)]
    pub products: usize,
    #[arg(long, default_value_t = 0.55)]
    pub presence: f64,
    #[arg(long, default_value_t = 0.02)]
    pub ambiguous: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}
