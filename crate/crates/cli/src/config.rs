//! Flag/config-file merging, exit-code classification and input loading.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use wordprob::ingest::{read_records, read_rt, RtRow};
use wordprob::synth::parse_sentences;
use wordprob::{
    decoding, ConditionalModel, Error, NGram64, SentenceScore64, Tabular64, Vocabulary,
};

use crate::{KindArg, ScoresArgs, SourceArgs, TransformArg, VariantArg};

#[derive(Debug)]
pub enum Failure {
    /// Bad flags, missing or malformed inputs.
    Invalid(String),
    /// Errors while computing on valid inputs.
    Runtime(String),
    /// A result that contradicts a guaranteed bound.
    Invariant(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 1,
            Failure::Runtime(_) => 2,
            Failure::Invariant(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Invalid(m) | Failure::Runtime(m) | Failure::Invariant(m) => m,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;

pub fn invalid(e: Error) -> Failure {
    Failure::Invalid(e.to_string())
}

pub fn runtime(e: Error) -> Failure {
    Failure::Runtime(e.to_string())
}

/// Defaults for any flag, read from `--config`. Keys mirror flag names with
/// underscores.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub order: Option<usize>,
    pub alpha: Option<f64>,
    pub records: Option<PathBuf>,
    pub sentences: Option<PathBuf>,
    pub text: Option<String>,
    pub rt: Option<PathBuf>,
    pub gp: Option<PathBuf>,
    pub variant: Option<VariantArg>,
    pub depth: Option<usize>,
    pub context: Option<String>,
    pub witness: Option<bool>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub kind: Option<KindArg>,
    pub transform: Option<TransformArg>,
    pub n_perm: Option<usize>,
    pub n_boot: Option<usize>,
    pub quadratic: Option<bool>,
    pub subject_intercepts: Option<bool>,
    pub item_intercepts: Option<bool>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = read_text(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Failure::Invalid(format!("config {}: {e}", path.display())))
    }

    /// Fills unset source flags from the file.
    pub fn source(&self, mut s: SourceArgs) -> SourceArgs {
        s.model = s.model.or_else(|| self.model.clone());
        s.corpus = s.corpus.or_else(|| self.corpus.clone());
        s.vocab = s.vocab.or_else(|| self.vocab.clone());
        s.order = s.order.or(self.order);
        s.alpha = s.alpha.or(self.alpha);
        s
    }

    pub fn scores(&self, mut s: ScoresArgs) -> ScoresArgs {
        s.source = self.source(s.source);
        s.records = s.records.or_else(|| self.records.clone());
        s.sentences = s.sentences.or_else(|| self.sentences.clone());
        s
    }
}

pub fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Invalid(format!("file not found: {}", path.display())))
    }
}

pub fn read_text(path: &Path) -> CliResult<String> {
    require_file(path)?;
    fs::read_to_string(path).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

pub fn required<T>(value: Option<T>, flag: &str) -> CliResult<T> {
    value.ok_or_else(|| Failure::Invalid(format!("missing required --{flag}")))
}

pub fn load_model(s: &SourceArgs) -> CliResult<Box<dyn ConditionalModel<f64>>> {
    match (&s.model, &s.corpus) {
        (Some(_), Some(_)) => Err(Failure::Invalid("give either --model or --corpus, not both".into())),
        (Some(path), None) => {
            require_file(path)?;
            Ok(Box::new(Tabular64::from_path(path).map_err(invalid)?))
        }
        (None, Some(corpus)) => Ok(Box::new(train_ngram(s, corpus)?)),
        (None, None) => Err(Failure::Invalid("no model: give --model or --corpus".into())),
    }
}

pub fn train_ngram(s: &SourceArgs, corpus: &Path) -> CliResult<NGram64> {
    let vocab_path = required(s.vocab.as_ref(), "vocab")?;
    require_file(vocab_path)?;
    let vocab = Vocabulary::from_path(vocab_path).map_err(invalid)?;
    let text = read_text(corpus)?;
    let sentences = wordprob::synth::parse_corpus(&text, &vocab).map_err(invalid)?;
    let order = s.order.unwrap_or(2);
    let alpha = s.alpha.unwrap_or(1.0);
    NGram64::train(vocab, &sentences, order, alpha).map_err(invalid)
}

pub fn load_rt(path: &Path) -> CliResult<Vec<RtRow>> {
    require_file(path)?;
    read_rt(path).map_err(invalid)
}

/// Sentence scores in input order, from records or from a model applied to
/// a sentences file.
pub fn load_scores(s: &ScoresArgs) -> CliResult<Vec<(String, SentenceScore64)>> {
    if let Some(records) = &s.records {
        if s.source.model.is_some() || s.source.corpus.is_some() || s.sentences.is_some() {
            return Err(Failure::Invalid(
                "--records replaces --model, --corpus and --sentences".into(),
            ));
        }
        require_file(records)?;
        let recs = read_records(records).map_err(invalid)?;
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(recs.len());
        for r in &recs {
            if !seen.insert(r.sid.as_str()) {
                return Err(Failure::Invalid(format!("duplicate record id {}", r.sid)));
            }
            out.push((r.sid.clone(), decoding::score_from_record(r).map_err(invalid)?));
        }
        return Ok(out);
    }
    let model = load_model(&s.source)?;
    let path = required(s.sentences.as_ref(), "sentences")?;
    let text = read_text(path)?;
    let sentences = parse_sentences(&text, model.vocab()).map_err(invalid)?;
    sentences
        .into_iter()
        .map(|(sid, toks)| {
            let seg = wordprob::Segmentation::from_tokens(toks, model.vocab()).map_err(invalid)?;
            let score = decoding::score_sentence(&*model, &seg).map_err(runtime)?;
            Ok((sid, score))
        })
        .collect()
}
