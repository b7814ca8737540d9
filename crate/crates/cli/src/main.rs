//! `wordprob`: score words under leading- and trailing-whitespace decoding,
//! check sample-space normalization, and run reading-time regressions.
//!
//! Exit codes: 0 success, 1 invalid configuration or input, 2 runtime or
//! data error, 3 invariant violation.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(name = "wordprob", version, about = "Word probabilities from subword language models")]
pub struct Cli {
    /// JSON file with default values for any flag; flags override it.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Per-word surprisal table (CSV) under WL and WT decoding.
    Score(ScoreArgs),
    /// Sum word probabilities over the sample space up to a token depth.
    CheckOmega(OmegaArgs),
    /// Log-likelihood gain from surprisal, per decoding variant.
    Regress(RegressArgs),
    /// Garden-path effect on predicted reading times, per region.
    GpEffect(GpArgs),
    /// Train an additive-smoothing n-gram model and write it as a table.
    TrainNgram(TrainArgs),
    /// Write the synthetic garden-path corpus and reading times.
    GenSynth(GenArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantArg {
    Wl,
    Wt,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KindArg {
    Spr,
    Gpd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformArg {
    Log,
    Identity,
}

/// Where conditional probabilities come from.
#[derive(Args, Debug, Clone, Default)]
pub struct SourceArgs {
    /// Tabular model file.
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
    /// Training corpus (space-separated token surfaces per line) for an n-gram model.
    #[arg(long, value_name = "PATH")]
    pub corpus: Option<PathBuf>,
    /// Vocabulary file (`surface<TAB>B|I` lines), required with --corpus.
    #[arg(long, value_name = "PATH")]
    pub vocab: Option<PathBuf>,
    /// n-gram order [default: 2].
    #[arg(long)]
    pub order: Option<usize>,
    /// Additive smoothing constant [default: 1].
    #[arg(long)]
    pub alpha: Option<f64>,
}

/// Model or precomputed records, plus the sentences to score.
#[derive(Args, Debug, Clone, Default)]
pub struct ScoresArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Per-token log-probability records (JSONL) instead of a model.
    #[arg(long, value_name = "PATH")]
    pub records: Option<PathBuf>,
    /// Sentences as `sid<TAB>space-separated token surfaces` lines.
    #[arg(long, value_name = "PATH")]
    pub sentences: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub scores: ScoresArgs,
    /// Raw text, tokenized greedily; spaces become the word marker.
    #[arg(long)]
    pub text: Option<String>,
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    /// Output CSV path [default: stdout].
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct OmegaArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Use the built-in table whose chain-rule word mass is 2.
    #[arg(long)]
    pub witness: bool,
    /// Maximum word length in tokens [default: 10].
    #[arg(long)]
    pub depth: Option<usize>,
    /// Conditioning context as space-separated token surfaces.
    #[arg(long)]
    pub context: Option<String>,
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    /// JSON report path.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

/// Linking-model options shared by `regress` and `gp-effect`.
#[derive(Args, Debug, Clone, Default)]
pub struct FitArgs {
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    /// Reading-time measure; selects filters and baseline predictors [default: spr].
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    #[arg(long, value_enum)]
    pub transform: Option<TransformArg>,
    /// Seed for every resampling step.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Add squared length and position terms.
    #[arg(long)]
    pub quadratic: bool,
    /// Add one indicator column per subject.
    #[arg(long)]
    pub subject_intercepts: bool,
    /// Add one indicator column per item.
    #[arg(long)]
    pub item_intercepts: bool,
    /// JSON report path [default: stdout].
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RegressArgs {
    #[command(flatten)]
    pub scores: ScoresArgs,
    /// Reading-time CSV.
    #[arg(long, value_name = "PATH")]
    pub rt: Option<PathBuf>,
    #[command(flatten)]
    pub fit: FitArgs,
    /// Sign-flip permutations for the WL/WT comparison [default: 10000].
    #[arg(long)]
    pub n_perm: Option<usize>,
}

#[derive(Args, Debug)]
pub struct GpArgs {
    #[command(flatten)]
    pub scores: ScoresArgs,
    /// Filler reading-time CSV used to fit the linking model.
    #[arg(long, value_name = "PATH")]
    pub rt: Option<PathBuf>,
    /// Critical-item reading-time CSV with condition and region columns.
    #[arg(long, value_name = "PATH")]
    pub gp: Option<PathBuf>,
    #[command(flatten)]
    pub fit: FitArgs,
    /// Bootstrap resamples [default: 2000].
    #[arg(long)]
    pub n_boot: Option<usize>,
    /// Plot-ready CSV of region, effect and interval bounds.
    #[arg(long, value_name = "PATH")]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Output table path [default: stdout].
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.code())
        }
    }
}

