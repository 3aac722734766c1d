use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Synthetic Big Five dialogue data, trait classifiers and their evaluation.
///
/// Settings come from built-in defaults, then the `--config` TOML file,
/// then command-line flags; later sources win.
#[derive(Debug, Parser)]
#[command(name = "traitgen", version)]
pub struct Cli {
    /// Pipeline configuration file (TOML). Paths inside it are relative to
    /// the file's directory.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate persona conversations and write the labeled agent messages.
    Generate(GenerateArgs),
    /// Sample utterances from an external dialogue corpus.
    Ingest(IngestArgs),
    /// Mark a seeded holdout of generated records TEST and the rest TRAIN.
    Split(SplitArgs),
    /// Train a classifier bundle on the TRAIN records of a corpus.
    Train(TrainArgs),
    /// Score messages with a bundle and write per-trait predictions.
    Predict(PredictArgs),
    /// Per-trait accuracy of one or more bundles.
    Evaluate(EvaluateArgs),
    /// Correlate processed output with annotator difficulty.
    Correlate(CorrelateArgs),
    /// Run the annotation HTTP service.
    Serve(ServeArgs),
    /// Render saved accuracy or correlation CSVs as text tables.
    Report(ReportArgs),
    /// Print the persona set as JSON.
    Personas,
    /// Print the fully resolved configuration as TOML.
    ShowConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderArg {
    Mock,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Together,
    Separate,
    Adapter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormulaArg {
    SumOfAbs,
    AbsDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DifficultyArg {
    PerTrait,
    PerMessage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SourceArg {
    Movie,
    Multiwoz,
    Convai,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub provider: Option<ProviderArg>,
    /// User utterance pool, one per line.
    #[arg(long)]
    pub user_lines: Option<PathBuf>,
    #[arg(long)]
    pub scripts: Option<usize>,
    #[arg(long)]
    pub exchanges: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Render headers without the gender clause.
    #[arg(long)]
    pub no_gender_clause: bool,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub source: SourceArg,
    /// Raw corpus file.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Append to an existing corpus file instead of replacing it.
    #[arg(long)]
    pub append: bool,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long)]
    pub holdout: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long)]
    pub strategy: Option<StrategyArg>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    #[arg(long)]
    pub formula: Option<FormulaArg>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// One or more trained bundles; one report row per bundle and dataset.
    #[arg(long = "bundle", required = true)]
    pub bundles: Vec<PathBuf>,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Annotation export (JSONL) supplying gold labels for real messages.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    #[arg(long = "bundle", required = true)]
    pub bundles: Vec<PathBuf>,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long)]
    pub difficulty: Option<DifficultyArg>,
    #[arg(long)]
    pub formula: Option<FormulaArg>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Corpus whose records become annotation tasks.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub journal: Option<PathBuf>,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub redundancy: Option<usize>,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Accuracy CSVs written by `evaluate`.
    #[arg(long = "accuracy")]
    pub accuracy: Vec<PathBuf>,
    /// Correlation CSVs written by `correlate`.
    #[arg(long = "correlation")]
    pub correlation: Vec<PathBuf>,
    /// Write the rendered text here as well as to stdout.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}
