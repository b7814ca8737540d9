//! Exhaustive enumeration of the word sample space: every token sequence of
//! one `V_B` token followed by zero or more `V_I` tokens, up to a depth.
//!
//! Summing word probabilities over this space shows whether a decoding
//! convention yields a proper distribution: WL sums can exceed one, WT sums
//! approach one from below.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::sig12;
use crate::probsource::reference::witness_table;
use crate::probsource::{begin_logmass, ConditionalModel};
use crate::scalar::Scalar;
use crate::vocab::TokenId;

/// Upper limit on enumerated words.
pub const ENUMERATION_BUDGET: u128 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Wl,
    Wt,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Wl => "wl",
            Mode::Wt => "wt",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnumeratedWord<T> {
    pub tokens: Vec<TokenId>,
    pub wl_prob: T,
    pub wt_prob: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthMass<T> {
    /// Number of tokens in the words summed at this depth.
    pub tokens: usize,
    pub mass: T,
    pub cumulative: T,
}

/// Partial sums of word probabilities over the sample space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OmegaReport<T> {
    pub mode: Mode,
    /// Context surfaces; empty for the sequence start.
    pub context: Vec<String>,
    pub per_depth: Vec<DepthMass<T>>,
    pub cumulative: T,
    /// Largest `V_I` mass over any context, when the model can bound it.
    pub max_inside_mass: Option<T>,
    /// Bound on the mass beyond the enumerated depth: `q^depth` for WT and
    /// `q^depth / (1 − q)` for WL, with `q` the maximum inside mass.
    pub tail_bound: Option<T>,
}

impl<T: Scalar> OmegaReport<T> {
    pub fn depth(&self) -> usize {
        self.per_depth.len()
    }

    /// WT mass is the probability of a disjoint union and may not exceed one.
    pub fn exceeds_one(&self, tol: T) -> bool {
        self.cumulative > T::one() + tol
    }

    /// Whether `|cumulative − 1| ≤ tail_bound + tol` (WT only; `None` when
    /// no tail bound is available or the mode is WL).
    pub fn certified(&self, tol: T) -> Option<bool> {
        match (self.mode, self.tail_bound) {
            (Mode::Wt, Some(tail)) => Some((self.cumulative - T::one()).abs() <= tail + tol),
            _ => None,
        }
    }

    /// Plain-text table: one line per depth, then the totals.
    pub fn to_table_string(&self) -> String {
        let mut out = String::new();
        let ctx = if self.context.is_empty() {
            "ε".to_owned()
        } else {
            self.context.join(" ")
        };
        let _ = writeln!(out, "mode\t{}", self.mode.as_str());
        let _ = writeln!(out, "context\t{ctx}");
        let _ = writeln!(out, "depth\tmass\tcumulative");
        for d in &self.per_depth {
            let _ = writeln!(
                out,
                "{}\t{}\t{}",
                d.tokens,
                sig12(d.mass.to_f64_lossy()),
                sig12(d.cumulative.to_f64_lossy())
            );
        }
        let _ = writeln!(out, "cumulative\t{}", sig12(self.cumulative.to_f64_lossy()));
        if let Some(t) = self.tail_bound {
            let _ = writeln!(out, "tail_bound\t{}", sig12(t.to_f64_lossy()));
        }
        out
    }
}

fn word_count(n_begin: usize, n_inside: usize, max_tokens: usize) -> u128 {
    let mut total: u128 = 0;
    let mut level = n_begin as u128;
    for _ in 0..max_tokens {
        total = total.saturating_add(level);
        level = level.saturating_mul(n_inside as u128);
        if total > ENUMERATION_BUDGET || level == 0 {
            break;
        }
    }
    total
}

/// All words of 1..=`max_tokens` tokens after `ctx`, in (length, token id)
/// order, with their WL and WT probabilities.
pub fn enumerate_words<T: Scalar, M: ConditionalModel<T> + ?Sized>(
    model: &M,
    ctx: &[TokenId],
    max_tokens: usize,
) -> Result<Vec<EnumeratedWord<T>>> {
    let vocab = model.vocab();
    if max_tokens == 0 {
        return Err(Error::Domain("max_tokens must be at least 1".into()));
    }
    let count = word_count(vocab.begin_ids().len(), vocab.inside_ids().len(), max_tokens);
    if count > ENUMERATION_BUDGET {
        return Err(Error::EnumerationBudget {
            words: count,
            budget: ENUMERATION_BUDGET,
        });
    }

    let start = model.next_logprobs(ctx)?;
    let before = begin_logmass(vocab, &start);
    if before == T::neg_infinity() {
        return Err(Error::ZeroBoundaryMass { position: ctx.len() });
    }

    struct Open<T> {
        tokens: Vec<TokenId>,
        wl: T,
        next: Vec<T>,
    }

    let mut buf = ctx.to_vec();
    let mut expand = |tokens: Vec<TokenId>, wl: T| -> Result<(EnumeratedWord<T>, Open<T>)> {
        buf.truncate(ctx.len());
        buf.extend_from_slice(&tokens);
        let next = model.next_logprobs(&buf)?;
        let wt = wl + begin_logmass(vocab, &next) - before;
        let word = EnumeratedWord {
            tokens: tokens.clone(),
            wl_prob: wl.exp(),
            wt_prob: wt.exp(),
        };
        Ok((word, Open { tokens, wl, next }))
    };

    let mut out = Vec::with_capacity(count as usize);
    let mut level = Vec::new();
    for &b in vocab.begin_ids() {
        let (w, open) = expand(vec![b], start[b.index()])?;
        out.push(w);
        level.push(open);
    }
    for _ in 1..max_tokens {
        let mut next_level = Vec::with_capacity(level.len() * vocab.inside_ids().len());
        for open in &level {
            for &i in vocab.inside_ids() {
                let mut tokens = open.tokens.clone();
                tokens.push(i);
                let (w, o) = expand(tokens, open.wl + open.next[i.index()])?;
                out.push(w);
                next_level.push(o);
            }
        }
        if next_level.is_empty() {
            break;
        }
        level = next_level;
    }
    Ok(out)
}

/// Per-depth and cumulative word mass up to `max_tokens` under `mode`.
pub fn p_omega_partial<T: Scalar, M: ConditionalModel<T> + ?Sized>(
    model: &M,
    ctx: &[TokenId],
    max_tokens: usize,
    mode: Mode,
) -> Result<OmegaReport<T>> {
    let words = enumerate_words(model, ctx, max_tokens)?;
    let mut per_depth: Vec<DepthMass<T>> = Vec::new();
    let mut cumulative = T::zero();
    let mut current = 0usize;
    let mut mass = T::zero();
    for w in &words {
        if w.tokens.len() != current {
            if current > 0 {
                cumulative = cumulative + mass;
                per_depth.push(DepthMass {
                    tokens: current,
                    mass,
                    cumulative,
                });
            }
            current = w.tokens.len();
            mass = T::zero();
        }
        mass = mass
            + match mode {
                Mode::Wl => w.wl_prob,
                Mode::Wt => w.wt_prob,
            };
    }
    cumulative = cumulative + mass;
    per_depth.push(DepthMass {
        tokens: current,
        mass,
        cumulative,
    });
    // depths beyond an empty V_I contribute nothing
    while per_depth.len() < max_tokens {
        per_depth.push(DepthMass {
            tokens: per_depth.len() + 1,
            mass: T::zero(),
            cumulative,
        });
    }

    let q = model.max_inside_mass();
    let depth = T::from_usize_lossy(max_tokens);
    let tail_bound = q.and_then(|q| match mode {
        Mode::Wt => Some(q.powf(depth)),
        Mode::Wl if q < T::one() => Some(q.powf(depth) / (T::one() - q)),
        Mode::Wl => None,
    });
    let vocab = model.vocab();
    Ok(OmegaReport {
        mode,
        context: ctx.iter().map(|&t| vocab.surface(t).to_owned()).collect(),
        per_depth,
        cumulative,
        max_inside_mass: q,
        tail_bound,
    })
}

/// WL report at depth 2 on the degenerate table where `P(▁j1) = 1` and
/// `P(j2 | ▁j1) = 1`; its cumulative mass is exactly 2.
pub fn excess_mass_witness() -> OmegaReport<f64> {
    p_omega_partial(&witness_table::<f64>(), &[], 2, Mode::Wl).expect("static table enumerates")
}
