//! `kairos` command-line entry point.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 unmet threshold.
//! Errors are reported on stderr as one line, `error: <kind>: <reason>`.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Threshold(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Threshold(_) => 3,
        }
    }

    fn line(&self) -> String {
        let (kind, msg) = match self {
            CliError::Usage(m) => ("usage", m),
            CliError::Data(m) => ("data", m),
            CliError::Threshold(m) => ("threshold", m),
        };
        format!("error: {kind}: {}", msg.replace('\n', " "))
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "kairos", version, about = "Claim impact prediction from argument-tree context")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Corpus statistics: vote histogram, votes per class, agreement and context length tables.
    Stats(StatsArgs),
    /// Write the claims that pass the vote and agreement filter.
    Filter(FilterCmdArgs),
    /// Stratified train/validation/test split of the filtered claims.
    Split(SplitCmdArgs),
    /// Train one model per seed; writes checkpoints and a run manifest.
    Train(TrainArgs),
    /// Evaluate checkpoints: macro and per-class P/R/F1, per-context-length F1.
    Eval(EvalArgs),
    /// Predicted label and class distribution per claim.
    Predict(PredictArgs),
    /// Generate a synthetic corpus with planted labels and its oracle sidecar.
    Synth(SynthArgs),
}

#[derive(Args, Debug, Clone)]
pub struct FilterArgs {
    /// Corpus file (tab-separated claim records).
    #[arg(long)]
    pub corpus: PathBuf,
    /// JSON config file; command-line flags take precedence over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Minimum number of impact votes [default: 5].
    #[arg(long)]
    pub min_votes: Option<u64>,
    /// Agreement must be strictly greater than this percentage [default: 60].
    #[arg(long)]
    pub min_agreement: Option<f64>,
    /// Label scheme for agreement: three or five [default: three].
    #[arg(long)]
    pub scheme: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct SplitArgs {
    /// Train,validation,test ratios [default: 0.7,0.15,0.15].
    #[arg(long)]
    pub split_ratios: Option<String>,
    /// Seed for the split and the first training run [default: 1].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory with train.tsv, validation.tsv and test.tsv from `split`;
    /// replaces --split-ratios.
    #[arg(long)]
    pub split_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[command(flatten)]
    pub filter: FilterArgs,
    /// Output format: text or kv [default: text].
    #[arg(long)]
    pub format: Option<String>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FilterCmdArgs {
    #[command(flatten)]
    pub filter: FilterArgs,
    /// Output file for the retained claims.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SplitCmdArgs {
    #[command(flatten)]
    pub filter: FilterArgs,
    /// Train,validation,test ratios [default: 0.7,0.15,0.15].
    #[arg(long)]
    pub split_ratios: Option<String>,
    /// Split seed [default: 1].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for train.tsv, validation.tsv and test.tsv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub filter: FilterArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    /// Model family: majority, svm, fasttext or bilstm [default: bilstm].
    #[arg(long)]
    pub model: Option<String>,
    /// Context strategy: none, parent, flat, attention or gru [default: none].
    #[arg(long)]
    pub context: Option<String>,
    /// Number of ancestors read by flat, attention and gru, 1 to 4 [default: 1].
    #[arg(long)]
    pub window: Option<usize>,
    /// Number of training seeds, starting at --seed [default: 1].
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Epoch cap [default: 40, or 15 for fasttext].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Learning rate [default: 0.001, or 0.8 for fasttext].
    #[arg(long)]
    pub lr: Option<f64>,
    /// Minibatch size [default: 32].
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Epochs without validation improvement before stopping [default: 5].
    #[arg(long)]
    pub patience: Option<usize>,
    /// Token embedding size [default: 32].
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// Recurrent hidden size per direction [default: 16].
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Word-vector file for the bilstm embeddings (word followed by values).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Word list for the svm lexicon features, NAME=FILE; repeatable.
    /// Without any, the bundled lists are used.
    #[arg(long, value_name = "NAME=FILE")]
    pub lexicon: Vec<String>,
    /// Output directory for checkpoints and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Summary format: text or kv [default: text].
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub filter: FilterArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    /// Checkpoint written by `train`; repeatable.
    #[arg(long, required = true)]
    pub checkpoint: Vec<PathBuf>,
    /// Which part to evaluate: train, validation or test [default: test].
    #[arg(long)]
    pub subset: Option<String>,
    /// Output format: text or kv [default: text].
    #[arg(long)]
    pub format: Option<String>,
    /// Exit with code 3 when mean macro-F1 is below this value.
    #[arg(long)]
    pub min_f1: Option<f64>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// Corpus file (tab-separated claim records).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Claim id; every non-thesis claim when omitted.
    #[arg(long)]
    pub claim: Option<String>,
    /// Topic of --claim, when ids repeat across trees.
    #[arg(long)]
    pub topic: Option<String>,
    /// Output format: text or kv [default: text].
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// JSON config file; command-line flags take precedence over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of trees [default: 200].
    #[arg(long)]
    pub trees: Option<usize>,
    /// Minimum levels per tree, thesis included [default: 2].
    #[arg(long)]
    pub min_depth: Option<usize>,
    /// Maximum levels per tree, thesis included [default: 4].
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// Minimum children per inner claim [default: 1].
    #[arg(long)]
    pub min_branching: Option<usize>,
    /// Maximum children per inner claim [default: 3].
    #[arg(long)]
    pub max_branching: Option<usize>,
    /// Number of pseudo-words, markers included [default: 200].
    #[arg(long)]
    pub vocab_size: Option<usize>,
    /// Share of claims labeled by their governing ancestor [default: 0.9].
    #[arg(long)]
    pub signal: Option<f64>,
    /// Share of claims with a uniformly random label [default: 0.05].
    #[arg(long)]
    pub noise: Option<f64>,
    /// Which ancestor governs the label, 1 = parent [default: 1].
    #[arg(long)]
    pub signal_ancestor: Option<usize>,
    /// Probability that a claim reuses the text of an earlier claim with a different label [default: 0].
    #[arg(long)]
    pub duplication: Option<f64>,
    /// Generator seed [default: 1].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for corpus.tsv and oracle.kv.
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                let _ = e.print();
                return ExitCode::from(1);
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", CliError::Usage(first.to_string()).line());
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Stats(a) => commands::stats(a),
        Command::Filter(a) => commands::filter(a),
        Command::Split(a) => commands::split(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Predict(a) => commands::predict(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.code())
        }
    }
}
