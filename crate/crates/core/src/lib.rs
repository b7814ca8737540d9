//! Word-level probabilities from subword language models.
//!
//! Subword vocabularies split into word-initial tokens (`V_B`, carrying a
//! leading whitespace marker) and word-internal tokens (`V_I`). This crate
//! aggregates token probabilities into word probabilities under two
//! conventions:
//!
//! * **whitespace-leading (WL)**: the chain-rule product of a word's tokens,
//!   which is what most pipelines compute and which does not define a
//!   proper distribution over words;
//! * **whitespace-trailing (WT)**: the WL probability rescaled by the
//!   boundary mass after the word over the boundary mass before it, so the
//!   probability of the trailing whitespace belongs to the current word.
//!
//! On top of the decoders sit exhaustive normalization checks over the word
//! sample space, reading-time ingestion, and an OLS engine for
//! log-likelihood comparisons and garden-path effect estimates.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix the scalar to `f64`, with `*32` variants
//! for single precision.

pub mod decoding;
mod error;
pub mod format;
pub mod ingest;
pub mod normcheck;
pub mod pipeline;
pub mod probsource;
pub mod regress;
mod scalar;
pub mod synth;
pub mod vocab;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use decoding::{ScoredWord, SentenceScore, Variant};
pub use normcheck::{Mode, OmegaReport};
pub use probsource::{ConditionalModel, NGramModel, TabularModel, UniformModel};
pub use vocab::{Segmentation, TokenClass, TokenId, Vocabulary, WordSpan};

/// Double-precision tabular model.
pub type Tabular64 = TabularModel<f64>;
/// Single-precision tabular model.
pub type Tabular32 = TabularModel<f32>;
/// Double-precision additive-smoothing n-gram model.
pub type NGram64 = NGramModel<f64>;
/// Single-precision additive-smoothing n-gram model.
pub type NGram32 = NGramModel<f32>;
/// Double-precision uniform model.
pub type Uniform64 = UniformModel<f64>;

pub type ScoredWord64 = ScoredWord<f64>;
pub type ScoredWord32 = ScoredWord<f32>;
pub type SentenceScore64 = SentenceScore<f64>;
pub type SentenceScore32 = SentenceScore<f32>;

pub type OmegaReport64 = OmegaReport<f64>;
pub type OmegaReport32 = OmegaReport<f32>;

pub type RegressionRow64 = ingest::RegressionRow<f64>;
pub type DesignMatrix64 = regress::DesignMatrix<f64>;
pub type DesignMatrix32 = regress::DesignMatrix<f32>;
pub type FitResult64 = regress::FitResult<f64>;
pub type FitResult32 = regress::FitResult<f32>;
pub type EffectEstimate64 = regress::EffectEstimate<f64>;
