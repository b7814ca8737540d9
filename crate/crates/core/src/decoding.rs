//! Word probabilities under whitespace-leading (WL) and whitespace-trailing
//! (WT) aggregation.
//!
//! For a word `w` spanning tokens `[s, e)` after context `c`:
//!
//! ```text
//! WL(w) = Π_{i∈[s,e)} P(x_i | x_<i)
//! WT(w) = WL(w) · P(x_e ∈ V_B | x_<e) / P(x_s ∈ V_B | x_<s)
//! ```
//!
//! Everything is computed in natural-log space; bits appear only in the
//! surprisal fields.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{LogprobRecord, RecordToken};
use crate::probsource::{begin_logmass, ConditionalModel};
use crate::scalar::Scalar;
use crate::vocab::{segment_words, Segmentation, TokenClass, TokenId, WordSpan};

/// Which aggregation a downstream consumer reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Wl,
    Wt,
}

impl Variant {
    pub const BOTH: [Variant; 2] = [Variant::Wl, Variant::Wt];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Wl => "wl",
            Variant::Wt => "wt",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredWord<T> {
    pub surface: String,
    pub span: WordSpan,
    pub wl_logprob: T,
    pub wt_logprob: T,
    pub wl_surprisal: T,
    pub wt_surprisal: T,
}

impl<T: Scalar> ScoredWord<T> {
    pub fn logprob(&self, variant: Variant) -> T {
        match variant {
            Variant::Wl => self.wl_logprob,
            Variant::Wt => self.wt_logprob,
        }
    }

    pub fn surprisal(&self, variant: Variant) -> T {
        match variant {
            Variant::Wl => self.wl_surprisal,
            Variant::Wt => self.wt_surprisal,
        }
    }
}

/// Scored words of one sentence plus the boundary masses that bracket it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentenceScore<T> {
    pub words: Vec<ScoredWord<T>>,
    /// `ln P(x_1 ∈ V_B)` in the empty context.
    pub initial_b_logmass: T,
    /// `ln P(x_{n+1} ∈ V_B | x_1..n)` after the last token.
    pub final_b_logmass: T,
}

impl<T: Scalar> SentenceScore<T> {
    pub fn total_logprob(&self, variant: Variant) -> T {
        self.words.iter().map(|w| w.logprob(variant)).sum()
    }

    pub fn surprisals(&self, variant: Variant) -> Vec<T> {
        self.words.iter().map(|w| w.surprisal(variant)).collect()
    }
}

/// Converts a natural-log probability to surprisal in bits.
pub fn surprisal_bits<T: Scalar>(logprob: T) -> Result<T> {
    if logprob.is_nan() || logprob > T::zero() {
        return Err(Error::Domain(format!("log probability {logprob} is not ≤ 0")));
    }
    Ok(-logprob / T::LN_2())
}

fn check_word_shape<T: Scalar, M: ConditionalModel<T> + ?Sized>(
    model: &M,
    ctx: &[TokenId],
    word: &[TokenId],
) -> Result<()> {
    let vocab = model.vocab();
    let classes = vocab.classes_of(word)?;
    let Some(first) = classes.first() else {
        return Err(Error::MalformedWord("empty word".into()));
    };
    if !first.is_begin() && !ctx.is_empty() {
        return Err(Error::MalformedWord(format!(
            "{:?} starts with a word-internal token outside sequence-initial position",
            vocab.word_surface(word)
        )));
    }
    if classes[1..].iter().any(|c| *c == TokenClass::Begin) {
        return Err(Error::MalformedWord(format!(
            "{:?} contains a word-initial token after its first position",
            vocab.word_surface(word)
        )));
    }
    Ok(())
}

/// Chain-rule log probability of `word` following `ctx`.
pub fn wl_word_logprob<T: Scalar, M: ConditionalModel<T> + ?Sized>(
    model: &M,
    ctx: &[TokenId],
    word: &[TokenId],
) -> Result<T> {
    check_word_shape(model, ctx, word)?;
    let mut prefix = ctx.to_vec();
    let mut total = T::zero();
    for &tok in word {
        let lp = model.next_logprobs(&prefix)?;
        total = total + lp[tok.index()];
        prefix.push(tok);
    }
    Ok(total)
}

/// WL log probability rescaled by the boundary mass after the word over
/// the boundary mass before it.
pub fn wt_word_logprob<T: Scalar, M: ConditionalModel<T> + ?Sized>(
    model: &M,
    ctx: &[TokenId],
    word: &[TokenId],
) -> Result<T> {
    let wl = wl_word_logprob(model, ctx, word)?;
    let before = model.b_logmass(ctx)?;
    if before == T::neg_infinity() {
        return Err(Error::ZeroBoundaryMass { position: ctx.len() });
    }
    let mut full = ctx.to_vec();
    full.extend_from_slice(word);
    let after = model.b_logmass(&full)?;
    Ok(rescale(wl, before, after))
}

fn rescale<T: Scalar>(wl: T, before: T, after: T) -> T {
    let wt = wl + after - before;
    // WT(w) ≤ P(x_s | ·) / P(x_s ∈ V_B | ·) ≤ 1; clip rounding overshoot
    if wt > T::zero() {
        T::zero()
    } else {
        wt
    }
}

/// Combines per-token log probabilities and per-position boundary masses
/// into scored words. `b_logmass[i]` is the boundary mass after the first
/// `i` tokens, so it has one more entry than `token_logprobs`.
fn assemble<T: Scalar>(
    words: impl IntoIterator<Item = (String, WordSpan)>,
    token_logprobs: &[T],
    b_logmass: &[T],
) -> Result<SentenceScore<T>> {
    debug_assert_eq!(b_logmass.len(), token_logprobs.len() + 1);
    let mut scored = Vec::new();
    for (surface, span) in words {
        let wl = token_logprobs[span.range()]
            .iter()
            .fold(T::zero(), |acc, &lp| acc + lp);
        let before = b_logmass[span.start];
        if before == T::neg_infinity() {
            return Err(Error::ZeroBoundaryMass { position: span.start });
        }
        let wl = wl.min(T::zero());
        let wt = rescale(wl, before, b_logmass[span.end]);
        scored.push(ScoredWord {
            surface,
            span,
            wl_logprob: wl,
            wt_logprob: wt,
            wl_surprisal: surprisal_bits(wl)?,
            wt_surprisal: surprisal_bits(wt)?,
        });
    }
    Ok(SentenceScore {
        words: scored,
        initial_b_logmass: b_logmass[0],
        final_b_logmass: *b_logmass.last().expect("at least one boundary"),
    })
}

/// Per-token log probabilities and the `n + 1` boundary log masses of a
/// token sequence under `model`.
pub fn token_factors<T: Scalar, M: ConditionalModel<T> + ?Sized>(
    model: &M,
    tokens: &[TokenId],
) -> Result<(Vec<T>, Vec<T>)> {
    let vocab = model.vocab();
    let mut lps = Vec::with_capacity(tokens.len());
    let mut bms = Vec::with_capacity(tokens.len() + 1);
    for i in 0..=tokens.len() {
        let dist = model.next_logprobs(&tokens[..i])?;
        bms.push(begin_logmass(vocab, &dist));
        if let Some(&tok) = tokens.get(i) {
            lps.push(dist[tok.index()]);
        }
    }
    Ok((lps, bms))
}

/// Scores every word of a segmented sentence under both conventions.
pub fn score_sentence<T: Scalar, M: ConditionalModel<T> + ?Sized>(
    model: &M,
    seg: &Segmentation,
) -> Result<SentenceScore<T>> {
    let vocab = model.vocab();
    let (lps, bms) = token_factors(model, seg.tokens())?;
    let words = seg
        .spans()
        .iter()
        .map(|&span| (vocab.word_surface(seg.word_tokens(span)), span));
    assemble(words, &lps, &bms)
}

fn strip_marker(surface: &str) -> &str {
    let mut cs = surface.chars();
    match cs.next() {
        Some(c) if c.is_whitespace() || c == '▁' || c == 'Ġ' => cs.as_str(),
        _ => surface,
    }
}

/// Scores a sentence from exported token log probabilities and boundary
/// masses, with the same arithmetic as [`score_sentence`].
///
/// Word surfaces drop the leading marker of the first token when it is a
/// space, `▁` or `Ġ`.
pub fn score_from_record<T: Scalar>(record: &LogprobRecord) -> Result<SentenceScore<T>> {
    record.validate().map_err(|(field, reason)| Error::Record {
        line: 0,
        field: field.into(),
        reason,
    })?;
    let conv = |x: f64| T::from_f64(x).expect("finite record value");
    let lps: Vec<T> = record.tokens.iter().map(|t| conv(t.lp)).collect();
    let bms: Vec<T> = record.bm.iter().copied().map(conv).collect();
    let classes: Vec<TokenClass> = record
        .tokens
        .iter()
        .map(|t| if t.b { TokenClass::Begin } else { TokenClass::Inside })
        .collect();
    let words = segment_words(&classes).into_iter().map(|span| {
        let joined: String = record.tokens[span.range()].iter().map(|t| t.t.as_str()).collect();
        let surface = if record.tokens[span.start].b {
            strip_marker(&joined).to_owned()
        } else {
            joined
        };
        (surface, span)
    });
    assemble(words, &lps, &bms)
}

/// Exports the factors `score_sentence` uses as a [`LogprobRecord`].
///
/// Fails when a factor is zero, since the JSONL format carries finite logs only.
pub fn export_record<M: ConditionalModel<f64> + ?Sized>(
    model: &M,
    seg: &Segmentation,
    sid: impl Into<String>,
) -> Result<LogprobRecord> {
    let vocab = model.vocab();
    let (lps, bms) = token_factors(model, seg.tokens())?;
    if let Some(i) = lps.iter().chain(&bms).position(|x| !x.is_finite()) {
        return Err(Error::Domain(format!("factor {i} is a zero probability; records need finite logs")));
    }
    let tokens = seg
        .tokens()
        .iter()
        .zip(lps)
        .map(|(&t, lp)| RecordToken {
            t: vocab.surface(t).to_owned(),
            lp,
            b: vocab.class(t).is_begin(),
        })
        .collect();
    Ok(LogprobRecord {
        sid: sid.into(),
        tokens,
        bm: bms,
    })
}
