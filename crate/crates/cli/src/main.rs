//! `pcv`: build prompted contextual vectors, train and evaluate classifiers,
//! and run the experiment protocols from the command line.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use pcv_core::corpus::{CorpusFormat, Label, Source};
use pcv_core::learn::{Metric, ModelKind, ThresholdRule};
use pcv_core::synth::SynthProfile;

/// Environment variable that overrides the response-cache path.
pub const CACHE_ENV: &str = "PCV_CACHE";

#[derive(Parser, Debug)]
#[command(name = "pcv", version, about = "Prompted contextual vectors for phishing detection")]
pub struct Cli {
    /// Worker threads for data-parallel work (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub parallelism: Option<usize>,

    /// Log filter for the JSON logs written to stderr.
    #[arg(long, global = true, default_value = "info", value_name = "LEVEL")]
    pub log_level: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Load a raw corpus and write it as normalized JSON Lines.
    Ingest(IngestArgs),
    /// Ask the judge ensemble every question about every document.
    Vectorize(VectorizeArgs),
    /// Fit a classifier on a vector dataset and save it.
    Train(TrainArgs),
    /// Score a vector dataset with a saved model.
    Evaluate(EvaluateArgs),
    /// Run experiment configurations.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
    /// Provider-subset or leave-one-question-out ablations.
    #[command(subcommand)]
    Ablate(AblateCommand),
    /// Inspect a vector dataset.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Two-dimensional views of a vector dataset.
    #[command(subcommand)]
    Viz(VizCommand),
    /// Generate a synthetic corpus for offline runs.
    Synth(SynthArgs),
    /// Inspect the response cache.
    #[command(subcommand)]
    Cache(CacheCommand),
}

fn threshold_rule(s: &str) -> Result<ThresholdRule, String> {
    s.parse().map_err(|e: pcv_core::Error| format!("{e}; expected a number in [0, 1], optimize:f1 or optimize:gmean"))
}

fn names<T: Copy>(all: &[T], name: fn(T) -> &'static str) -> Vec<&'static str> {
    all.iter().map(|&v| name(v)).collect()
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// File or directory to read.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_parser = PossibleValuesParser::new(["jsonl", "csv", "eml_dir", "mbox"]).map(|s| s.parse::<CorpusFormat>().expect("listed format")))]
    pub format: CorpusFormat,
    /// Label for formats that carry none (eml, mbox).
    #[arg(long, value_parser = PossibleValuesParser::new(names(Label::ALL, Label::as_str)).map(|s| s.parse::<Label>().expect("listed label")))]
    pub label: Option<Label>,
    /// Source for formats or rows that carry none.
    #[arg(long, value_parser = PossibleValuesParser::new(names(Source::ALL, Source::as_str)).map(|s| s.parse::<Source>().expect("listed source")))]
    pub source: Option<Source>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CorpusArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "jsonl", value_parser = PossibleValuesParser::new(["jsonl", "csv", "eml_dir", "mbox"]).map(|s| s.parse::<CorpusFormat>().expect("listed format")))]
    pub corpus_format: CorpusFormat,
}

#[derive(Args, Debug)]
pub struct VectorizeArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Question-bank file (default: the built-in seven questions).
    #[arg(long)]
    pub bank: Option<PathBuf>,
    /// Prompt-template file (default: the built-in template).
    #[arg(long)]
    pub template: Option<PathBuf>,
    /// Provider file (default: three offline mock judges).
    #[arg(long)]
    pub providers: Option<PathBuf>,
    /// Response cache; `PCV_CACHE` takes precedence when set.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Abort when more than this fraction of cells fail.
    #[arg(long, default_value_t = 0.10)]
    pub max_failure_fraction: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_parser = PossibleValuesParser::new(["knn", "forest", "extra", "boosted"]).map(|s| s.parse::<ModelKind>().expect("listed model")))]
    pub model: ModelKind,
    /// Vector dataset.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Split file; trains on its `train` ids instead of every row.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_parser = PossibleValuesParser::new(["euclidean", "manhattan"]).map(|s| s.parse::<Metric>().expect("listed metric")))]
    pub metric: Option<Metric>,
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// `0.5`-style fixed value, `optimize:f1` or `optimize:gmean`.
    #[arg(long, default_value = "0.5", value_parser = threshold_rule)]
    pub threshold: ThresholdRule,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Saved model.
    #[arg(long)]
    pub model: PathBuf,
    /// Vector dataset.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Split file; scores its `test` ids instead of every row.
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Overrides the threshold stored with the model.
    #[arg(long, value_parser = threshold_rule)]
    pub threshold: Option<ThresholdRule>,
    /// Also write the result here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum ExperimentCommand {
    /// Run one configuration file and write its report.
    Run(ConfigArgs),
}

#[derive(Args, Debug)]
pub struct ConfigArgs {
    pub config: PathBuf,
    /// Response cache; `PCV_CACHE` takes precedence when set.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Report path (default: the config's `output`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum AblateCommand {
    /// Every non-empty provider subset.
    Llms(ConfigArgs),
    /// Drop one question at a time.
    Questions(ConfigArgs),
}

#[derive(Subcommand, Debug)]
pub enum AnalyzeCommand {
    /// Cells where providers disagree most.
    Disagreement(DisagreementArgs),
}

#[derive(Args, Debug)]
pub struct DisagreementArgs {
    /// Vector dataset.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub top: usize,
    /// Split file; restricts the analysis to its `test` ids.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum VizCommand {
    /// Exact t-SNE to a `doc_id,x,y,label` CSV.
    Tsne(TsneArgs),
}

#[derive(Args, Debug)]
pub struct TsneArgs {
    /// Vector dataset.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 30.0)]
    pub perplexity: f64,
    #[arg(long, default_value_t = 1000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Write run diagnostics (KL trace, flagged points) as JSON.
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Documents per class.
    #[arg(long = "per-class", short = 'n', value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "email", value_parser = PossibleValuesParser::new(["email", "sms"]).map(|s| s.parse::<SynthProfile>().expect("listed profile")))]
    pub profile: SynthProfile,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum CacheCommand {
    /// Entry count and unreadable lines of a cache file.
    Stats(CacheArgs),
}

#[derive(Args, Debug)]
pub struct CacheArgs {
    /// Cache file; `PCV_CACHE` takes precedence when set.
    #[arg(long)]
    pub path: Option<PathBuf>,
}

fn init_logging(level: &str) {
    let filter = tracing_subscriber::EnvFilter::try_new(level).unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    tracing_subscriber::fmt()
        .json()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
}

/// The error chain without causes whose text an outer message already
/// repeats.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = e.to_string();
    for cause in e.chain().skip(1) {
        let c = cause.to_string();
        if !msg.contains(&c) {
            msg.push_str(": ");
            msg.push_str(&c);
        }
    }
    msg
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Help and version requests are successes; every other parse
            // failure is a usage error.
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    init_logging(&cli.log_level);
    let threads = cli.parallelism;
    match pcv_core::par::with_threads(threads, move || commands::dispatch(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(2)
        }
    }
}
