//! Next-token distributions: the conditional factors every decoder consumes.
//!
//! Distributions are held as natural-log probabilities; [`ConditionalModel::next_dist`]
//! exponentiates on request.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use regex::Regex;

use crate::error::{Error, Result};
use crate::scalar::{log_sum_exp, Scalar};
use crate::vocab::{TokenClass, TokenId, Vocabulary};

/// Any source of next-token distributions over a fixed vocabulary.
///
/// Implementations are deterministic: equal contexts give equal vectors.
pub trait ConditionalModel<T: Scalar> {
    fn vocab(&self) -> &Vocabulary;

    /// Natural-log probabilities of each vocabulary entry following `ctx`.
    fn next_logprobs(&self, ctx: &[TokenId]) -> Result<Vec<T>>;

    fn next_dist(&self, ctx: &[TokenId]) -> Result<Vec<T>> {
        Ok(self.next_logprobs(ctx)?.into_iter().map(T::exp).collect())
    }

    /// Log of the marginal probability that the next token is in `V_B`.
    fn b_logmass(&self, ctx: &[TokenId]) -> Result<T> {
        let lp = self.next_logprobs(ctx)?;
        Ok(begin_logmass(self.vocab(), &lp))
    }

    fn b_mass(&self, ctx: &[TokenId]) -> Result<T> {
        self.b_logmass(ctx).map(T::exp)
    }

    /// Upper bound on the `V_I` mass over every context, when known.
    /// Used to certify truncated enumerations.
    fn max_inside_mass(&self) -> Option<T> {
        None
    }
}

impl<T: Scalar, M: ConditionalModel<T> + ?Sized> ConditionalModel<T> for &M {
    fn vocab(&self) -> &Vocabulary {
        (**self).vocab()
    }
    fn next_logprobs(&self, ctx: &[TokenId]) -> Result<Vec<T>> {
        (**self).next_logprobs(ctx)
    }
    fn b_logmass(&self, ctx: &[TokenId]) -> Result<T> {
        (**self).b_logmass(ctx)
    }
    fn max_inside_mass(&self) -> Option<T> {
        (**self).max_inside_mass()
    }
}

/// `ln Σ_{j ∈ V_B} exp(lp[j])`.
pub fn begin_logmass<T: Scalar>(vocab: &Vocabulary, lp: &[T]) -> T {
    log_sum_exp(vocab.begin_ids().iter().map(|t| lp[t.index()]))
}

fn inside_mass<T: Scalar>(vocab: &Vocabulary, lp: &[T]) -> T {
    vocab.inside_ids().iter().map(|t| lp[t.index()].exp()).sum()
}

fn check_context(vocab: &Vocabulary, ctx: &[TokenId]) -> Result<()> {
    ctx.iter().try_for_each(|&t| vocab.check(t))
}

fn render_context(vocab: &Vocabulary, ctx: &[TokenId]) -> String {
    if ctx.is_empty() {
        "ε".into()
    } else {
        ctx.iter()
            .map(|&t| {
                if t.index() < vocab.len() {
                    vocab.surface(t).to_owned()
                } else {
                    format!("#{}", t.index())
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Validates a probability vector and returns it in log space, divided by
/// its sum so it normalizes to working precision.
fn to_log_dist<T: Scalar>(probs: &[T], vocab: &Vocabulary, ctx: &[TokenId], tol: f64) -> Result<Vec<T>> {
    let bad = |reason: String| Error::Distribution {
        context: render_context(vocab, ctx),
        reason,
    };
    if probs.len() != vocab.len() {
        return Err(bad(format!("{} entries for a vocabulary of {}", probs.len(), vocab.len())));
    }
    if let Some((i, p)) = probs.iter().enumerate().find(|(_, p)| !p.is_finite() || **p < T::zero()) {
        return Err(bad(format!("entry {} has probability {p}", vocab.surface(TokenId::from(i)))));
    }
    let sum: T = probs.iter().copied().sum();
    let tol = T::lit(tol).max(T::epsilon() * T::lit(64.0));
    if (sum - T::one()).abs() > tol {
        return Err(bad(format!("probabilities sum to {sum}")));
    }
    let ln_sum = sum.ln();
    Ok(probs.iter().map(|p| p.ln() - ln_sum).collect())
}

/// Assigns `1/|V|` to every token in every context.
#[derive(Clone, Debug)]
pub struct UniformModel<T> {
    vocab: Vocabulary,
    logp: T,
}

impl<T: Scalar> UniformModel<T> {
    pub fn new(vocab: Vocabulary) -> Self {
        let logp = -T::from_usize_lossy(vocab.len()).ln();
        UniformModel { vocab, logp }
    }
}

impl<T: Scalar> ConditionalModel<T> for UniformModel<T> {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_logprobs(&self, ctx: &[TokenId]) -> Result<Vec<T>> {
        check_context(&self.vocab, ctx)?;
        Ok(vec![self.logp; self.vocab.len()])
    }

    fn max_inside_mass(&self) -> Option<T> {
        Some(T::from_usize_lossy(self.vocab.inside_ids().len()) / T::from_usize_lossy(self.vocab.len()))
    }
}

/// Explicit context → distribution table with a fallback for unlisted contexts.
///
/// Contexts are truncated to their last `order` tokens before lookup, so a
/// table of order `k` distinguishes sequence starts (contexts shorter than
/// `k`) from everything else.
#[derive(Clone, Debug)]
pub struct TabularModel<T> {
    vocab: Vocabulary,
    order: usize,
    table: BTreeMap<Vec<TokenId>, Vec<T>>,
    default: Vec<T>,
}

impl<T: Scalar> TabularModel<T> {
    /// A table with only a default distribution (given as probabilities).
    pub fn new(vocab: Vocabulary, order: usize, default: &[T]) -> Result<Self> {
        let default = to_log_dist(default, &vocab, &[], 1e-12)?;
        Ok(TabularModel {
            vocab,
            order,
            table: BTreeMap::new(),
            default,
        })
    }

    pub fn uniform_default(vocab: Vocabulary, order: usize) -> Self {
        let p = T::one() / T::from_usize_lossy(vocab.len());
        let default = vec![p; vocab.len()];
        Self::new(vocab, order, &default).expect("uniform vector is a distribution")
    }

    /// Stores the distribution (as probabilities) for an exact context key.
    pub fn insert(&mut self, ctx: Vec<TokenId>, probs: &[T]) -> Result<()> {
        self.insert_with_tolerance(ctx, probs, 1e-12)
    }

    fn insert_with_tolerance(&mut self, ctx: Vec<TokenId>, probs: &[T], tol: f64) -> Result<()> {
        check_context(&self.vocab, &ctx)?;
        if ctx.len() > self.order {
            return Err(Error::Distribution {
                context: render_context(&self.vocab, &ctx),
                reason: format!("key longer than the model order {}", self.order),
            });
        }
        let lp = to_log_dist(probs, &self.vocab, &ctx, tol)?;
        self.table.insert(ctx, lp);
        Ok(())
    }

    /// Builder form of [`TabularModel::insert`] keyed by surfaces.
    pub fn with(mut self, ctx: &str, probs: &[f64]) -> Result<Self> {
        let ctx = self.vocab.ids_of(ctx)?;
        let probs: Vec<T> = probs.iter().map(|&p| T::lit(p)).collect();
        self.insert(ctx, &probs)?;
        Ok(self)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn contexts(&self) -> impl Iterator<Item = &[TokenId]> {
        self.table.keys().map(Vec::as_slice)
    }

    fn key<'a>(&self, ctx: &'a [TokenId]) -> &'a [TokenId] {
        &ctx[ctx.len() - ctx.len().min(self.order)..]
    }

    /// Parses the tabular model format:
    ///
    /// ```text
    /// #order=1
    /// #vocab=▁a x          (optional; otherwise tokens in order of appearance)
    /// #marker=▁            (optional)
    /// ε	▁a:0.9,x:0.1
    /// *	▁a:0.1,x:0.9      (optional default; uniform when absent)
    /// ```
    ///
    /// Tokens missing from a line get probability zero. Each line must sum
    /// to one within 1e-9 and is renormalized exactly on load.
    pub fn parse(text: &str) -> Result<Self> {
        let item = Regex::new(r"(.+?):([-+0-9.eE]+|inf|NaN)(?:,|$)").expect("static regex");
        let err = |line: usize, reason: String| Error::ModelFile { line, reason };

        let mut order = None;
        let mut marker = Vocabulary::DEFAULT_MARKER;
        let mut declared: Option<Vec<String>> = None;
        let mut rows: Vec<(usize, Option<Vec<String>>, Vec<(String, f64)>)> = Vec::new();

        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            if let Some(h) = line.strip_prefix("#order=") {
                order = Some(
                    h.trim()
                        .parse::<usize>()
                        .map_err(|e| err(lineno, format!("bad order: {e}")))?,
                );
                continue;
            }
            if let Some(h) = line.strip_prefix("#marker=") {
                let mut cs = h.chars();
                marker = match (cs.next(), cs.next()) {
                    (Some(c), None) => c,
                    _ => return Err(err(lineno, "marker must be one character".into())),
                };
                continue;
            }
            if let Some(h) = line.strip_prefix("#vocab=") {
                declared = Some(h.split_whitespace().map(str::to_owned).collect());
                continue;
            }
            let (ctx, dist) = line
                .split_once('\t')
                .ok_or_else(|| err(lineno, "expected <context>\\t<token>:<prob>,...".into()))?;
            let ctx = match ctx.trim() {
                "*" => None,
                "ε" | "" => Some(Vec::new()),
                c => Some(c.split_whitespace().map(str::to_owned).collect()),
            };
            let mut items = Vec::new();
            let mut consumed = 0;
            for cap in item.captures_iter(dist) {
                let whole = cap.get(0).expect("group 0");
                if whole.start() != consumed {
                    return Err(err(lineno, format!("cannot parse {:?}", &dist[consumed..])));
                }
                consumed = whole.end();
                let p: f64 = cap[2]
                    .parse()
                    .map_err(|e| err(lineno, format!("bad probability {:?}: {e}", &cap[2])))?;
                items.push((cap[1].to_owned(), p));
            }
            if consumed != dist.len() || items.is_empty() {
                return Err(err(lineno, format!("cannot parse distribution {dist:?}")));
            }
            rows.push((lineno, ctx, items));
        }

        let order = order.ok_or_else(|| err(1, "missing #order header".into()))?;
        let surfaces = match declared {
            Some(v) => v,
            None => {
                let mut seen: Vec<String> = Vec::new();
                let mut push = |s: &String| {
                    if !seen.contains(s) {
                        seen.push(s.clone());
                    }
                };
                for (_, ctx, items) in &rows {
                    ctx.iter().flatten().for_each(&mut push);
                    items.iter().for_each(|(s, _)| push(s));
                }
                seen
            }
        };
        let vocab = Vocabulary::new(marker, surfaces)?;
        let mut model = Self::uniform_default(vocab, order);
        let mut default_seen = false;
        for (lineno, ctx, items) in rows {
            let mut probs = vec![T::zero(); model.vocab.len()];
            for (s, p) in items {
                let id = model.vocab.id(&s).map_err(|e| err(lineno, e.to_string()))?;
                if probs[id.index()] != T::zero() {
                    return Err(err(lineno, format!("token {s:?} listed twice")));
                }
                probs[id.index()] = T::from_f64(p).ok_or_else(|| err(lineno, format!("bad probability {p}")))?;
            }
            match ctx {
                None => {
                    if default_seen {
                        return Err(err(lineno, "second default line".into()));
                    }
                    default_seen = true;
                    model.default =
                        to_log_dist(&probs, &model.vocab, &[], 1e-9).map_err(|e| err(lineno, e.to_string()))?;
                }
                Some(ctx) => {
                    let ids = ctx
                        .iter()
                        .map(|s| model.vocab.id(s))
                        .collect::<Result<Vec<_>>>()
                        .map_err(|e| err(lineno, e.to_string()))?;
                    if model.table.contains_key(&ids) {
                        return Err(err(lineno, "duplicate context".into()));
                    }
                    model
                        .insert_with_tolerance(ids, &probs, 1e-9)
                        .map_err(|e| err(lineno, e.to_string()))?;
                }
            }
        }
        Ok(model)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Serializes to the format read by [`TabularModel::parse`]; probabilities
    /// are written with shortest round-trip `f64` formatting.
    pub fn to_file_string(&self) -> String {
        let vocab = &self.vocab;
        let mut out = format!("#order={}\n#marker={}\n#vocab=", self.order, vocab.marker());
        let surfaces: Vec<&str> = vocab.ids().map(|t| vocab.surface(t)).collect();
        out.push_str(&surfaces.join(" "));
        out.push('\n');
        let line = |lp: &[T]| {
            lp.iter()
                .enumerate()
                .filter(|(_, l)| **l > T::neg_infinity())
                .map(|(i, l)| format!("{}:{}", surfaces[i], l.exp().to_f64_lossy()))
                .collect::<Vec<_>>()
                .join(",")
        };
        for (ctx, lp) in &self.table {
            out.push_str(&render_context(vocab, ctx));
            out.push('\t');
            out.push_str(&line(lp));
            out.push('\n');
        }
        out.push_str("*\t");
        out.push_str(&line(&self.default));
        out.push('\n');
        out
    }
}

impl<T: Scalar> ConditionalModel<T> for TabularModel<T> {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_logprobs(&self, ctx: &[TokenId]) -> Result<Vec<T>> {
        check_context(&self.vocab, ctx)?;
        Ok(self.table.get(self.key(ctx)).unwrap_or(&self.default).clone())
    }

    fn max_inside_mass(&self) -> Option<T> {
        let vocab = &self.vocab;
        let q = self
            .table
            .values()
            .chain(std::iter::once(&self.default))
            .map(|lp| inside_mass(vocab, lp))
            .fold(T::zero(), T::max);
        Some(q.min(T::one()))
    }
}

#[derive(Clone, Debug, Default)]
struct ContextCounts {
    total: u64,
    next: HashMap<TokenId, u64>,
}

/// Order-`k` n-gram model with additive smoothing:
/// `P(j | c) = (count(c, j) + α) / (count(c) + α|V|)`.
///
/// The context is the previous `k − 1` tokens (fewer at sequence starts);
/// unseen contexts therefore fall back to the uniform distribution.
#[derive(Clone, Debug)]
pub struct NGramModel<T> {
    vocab: Vocabulary,
    order: usize,
    alpha: T,
    counts: HashMap<Vec<TokenId>, ContextCounts>,
}

impl<T: Scalar> NGramModel<T> {
    pub fn train(vocab: Vocabulary, corpus: &[Vec<TokenId>], order: usize, alpha: T) -> Result<Self> {
        if order == 0 {
            return Err(Error::Training("order must be at least 1".into()));
        }
        if !(alpha > T::zero() && alpha.is_finite()) {
            return Err(Error::Training(format!("smoothing constant must be positive, got {alpha}")));
        }
        if corpus.iter().all(Vec::is_empty) {
            return Err(Error::Training("empty corpus".into()));
        }
        let mut counts: HashMap<Vec<TokenId>, ContextCounts> = HashMap::new();
        for seq in corpus {
            check_context(&vocab, seq)?;
            for (i, &tok) in seq.iter().enumerate() {
                let ctx = seq[i.saturating_sub(order - 1)..i].to_vec();
                let entry = counts.entry(ctx).or_default();
                entry.total += 1;
                *entry.next.entry(tok).or_default() += 1;
            }
        }
        Ok(NGramModel {
            vocab,
            order,
            alpha,
            counts,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    fn key<'a>(&self, ctx: &'a [TokenId]) -> &'a [TokenId] {
        &ctx[ctx.len().saturating_sub(self.order - 1)..]
    }

    fn logprobs_for(&self, counts: Option<&ContextCounts>) -> Vec<T> {
        let v = T::from_usize_lossy(self.vocab.len());
        let total = counts.map_or(0, |c| c.total);
        let denom = (T::from_u64(total).expect("count") + self.alpha * v).ln();
        self.vocab
            .ids()
            .map(|t| {
                let c = counts.and_then(|c| c.next.get(&t)).copied().unwrap_or(0);
                (T::from_u64(c).expect("count") + self.alpha).ln() - denom
            })
            .collect()
    }

    /// The same conditional distributions as an order `k − 1` table.
    pub fn to_tabular(&self) -> TabularModel<T> {
        let mut table = BTreeMap::new();
        for (ctx, c) in &self.counts {
            table.insert(ctx.clone(), self.logprobs_for(Some(c)));
        }
        TabularModel {
            vocab: self.vocab.clone(),
            order: self.order - 1,
            table,
            default: self.logprobs_for(None),
        }
    }
}

impl<T: Scalar> ConditionalModel<T> for NGramModel<T> {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_logprobs(&self, ctx: &[TokenId]) -> Result<Vec<T>> {
        check_context(&self.vocab, ctx)?;
        Ok(self.logprobs_for(self.counts.get(self.key(ctx))))
    }

    fn max_inside_mass(&self) -> Option<T> {
        let unseen = inside_mass(&self.vocab, &self.logprobs_for(None));
        let q = self
            .counts
            .values()
            .map(|c| inside_mass(&self.vocab, &self.logprobs_for(Some(c))))
            .fold(unseen, T::max);
        Some(q.min(T::one()))
    }
}

/// Small hand-checkable tables used across examples and tests.
pub mod reference {
    use super::*;

    fn two_token_vocab(b: &str, i: &str) -> Vocabulary {
        let vocab = Vocabulary::new(Vocabulary::DEFAULT_MARKER, [b, i]).expect("valid vocabulary");
        debug_assert_eq!(vocab.class(TokenId(0)), TokenClass::Begin);
        vocab
    }

    /// `V_B = {▁j1}`, `V_I = {j2}` with `P(▁j1 | ε) = 1`, `P(j2 | ▁j1) = 1` and
    /// all mass back on `▁j1` after `▁j1 j2`: the degenerate construction
    /// under which chain-rule word probabilities sum to 2.
    pub fn witness_table<T: Scalar>() -> TabularModel<T> {
        TabularModel::new(two_token_vocab("▁j1", "j2"), 2, &[T::one(), T::zero()])
            .and_then(|m| m.with("", &[1.0, 0.0]))
            .and_then(|m| m.with("▁j1", &[0.0, 1.0]))
            .and_then(|m| m.with("▁j1 j2", &[1.0, 0.0]))
            .expect("static table")
    }

    /// `V_B = {▁a}`, `V_I = {x}`; `P(▁a | ε) = 0.9`, and `P(▁a) = 0.1` in every
    /// non-empty context. Chain-rule word mass diverges towards 9 while the
    /// trailing-whitespace mass sums to one.
    pub fn garden_table<T: Scalar>() -> TabularModel<T> {
        TabularModel::new(two_token_vocab("▁a", "x"), 1, &[T::lit(0.1), T::lit(0.9)])
            .and_then(|m| m.with("", &[0.9, 0.1]))
            .expect("static table")
    }

    /// `P(▁a | ε) = 0.5`, `P(x | ▁a) = 0.9`, `P(▁a | ▁a x) = 0.95`: the longer
    /// word `▁a x` gets a higher trailing-whitespace probability (0.855) than
    /// its prefix `▁a` (0.1).
    pub fn reversal_table<T: Scalar>() -> TabularModel<T> {
        TabularModel::new(two_token_vocab("▁a", "x"), 2, &[T::lit(0.5), T::lit(0.5)])
            .and_then(|m| m.with("", &[0.5, 0.5]))
            .and_then(|m| m.with("▁a", &[0.1, 0.9]))
            .and_then(|m| m.with("▁a x", &[0.95, 0.05]))
            .expect("static table")
    }
}
