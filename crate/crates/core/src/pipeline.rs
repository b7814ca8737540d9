//! End-to-end analyses over scored sentences and reading times: the
//! garden-path effect (fit on fillers, predict on critical items) and the
//! surprisal log-likelihood gain compared between WL and WT.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::decoding::{SentenceScore, Variant};
use crate::error::{Error, Result};
use crate::ingest::{aggregate_by, build_rows, filter_rt, FreqTable, RowOptions, RtKind, RtRow, Transform};
use crate::regress::{
    delta_ll, fit_ols, garden_path_effect, permutation_test, predict, residuals, DesignMatrix, DesignSpec,
    EffectEstimate, EffectOptions, FitResult, PermutationResult, PredictedRt, Predictor,
};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct GardenPathOptions {
    /// Linking model fitted on filler reading times.
    pub spec: DesignSpec,
    pub transform: Transform,
    pub kind: RtKind,
    pub effect: EffectOptions,
    pub regions: Vec<String>,
}

impl GardenPathOptions {
    pub fn new(seed: u64) -> Self {
        GardenPathOptions {
            spec: DesignSpec::filler(),
            transform: Transform::Identity,
            kind: RtKind::Spr,
            effect: EffectOptions::new(seed),
            regions: ["critical", "spillover1", "spillover2"].map(String::from).to_vec(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GardenPathReport<T> {
    pub variant: Variant,
    pub fit: FitResult<T>,
    pub effects: Vec<EffectEstimate<T>>,
    pub filler_rows: usize,
    pub item_rows: usize,
}

/// Fits the linking model on filler rows, predicts reading times for the
/// region-labelled item rows, and estimates the condition effect per region.
pub fn garden_path_pipeline<T: Scalar>(
    scores: &HashMap<String, SentenceScore<T>>,
    fillers: &[RtRow],
    items: &[RtRow],
    variant: Variant,
    opts: &GardenPathOptions,
) -> Result<GardenPathReport<T>> {
    let all: Vec<RtRow> = fillers.iter().chain(items).cloned().collect();
    let freqs = FreqTable::from_rows(&all);
    let row_opts = RowOptions::new(variant, opts.transform);

    let kept = filter_rt(fillers, opts.kind);
    let rows = build_rows(scores, &kept, &freqs, row_opts)?;
    if rows.is_empty() {
        return Err(Error::ReadingTimes("no filler rows survive filtering".into()));
    }
    let design = DesignMatrix::from_rows(&rows, &opts.spec)?;
    let fit = fit_ols(&design)?;

    let labelled: Vec<RtRow> = items.iter().filter(|r| r.region.is_some()).cloned().collect();
    let item_rows = build_rows(scores, &labelled, &freqs, row_opts)?;
    if item_rows.is_empty() {
        return Err(Error::ReadingTimes("no item rows carry a region label".into()));
    }
    let pred = predict(&fit, &DesignMatrix::for_columns(&item_rows, &fit.names)?)?;
    let preds: Vec<PredictedRt<T>> = item_rows
        .iter()
        .zip(pred)
        .map(|(r, p)| {
            Ok(PredictedRt {
                subject: r.subject.clone(),
                item: r.item.clone(),
                condition: r.condition.clone().ok_or_else(|| Error::Alignment {
                    sid: r.sid.clone(),
                    widx: r.widx,
                    reason: "item row has no condition".into(),
                })?,
                region: r.region.clone().expect("filtered on region"),
                pred: p,
            })
        })
        .collect::<Result<_>>()?;
    let effects = opts
        .regions
        .iter()
        .map(|region| garden_path_effect(&preds, region, &opts.effect))
        .collect::<Result<_>>()?;
    Ok(GardenPathReport {
        variant,
        fit,
        effects,
        filler_rows: rows.len(),
        item_rows: item_rows.len(),
    })
}

#[derive(Clone, Debug)]
pub struct DeltaLlOptions {
    /// Model without surprisal; the full model adds the `surp` column.
    pub base: DesignSpec,
    pub transform: Transform,
    pub kind: RtKind,
    /// Seed for the shuffled-surprisal control.
    pub seed: u64,
}

impl DeltaLlOptions {
    pub fn new(seed: u64) -> Self {
        DeltaLlOptions {
            base: DesignSpec::spr_base(),
            transform: Transform::Log,
            kind: RtKind::Spr,
            seed,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DeltaLlReport<T> {
    pub variant: Variant,
    pub n: usize,
    pub base_log_likelihood: T,
    pub full_log_likelihood: T,
    pub delta_ll: T,
    /// Gain when the surprisal column is randomly permuted across rows.
    pub shuffled_delta_ll: T,
    pub surp_coefficient: T,
    pub base: FitResult<T>,
    pub full: FitResult<T>,
    /// Sum of squared full-model residuals per sentence.
    #[serde(skip)]
    pub sq_err_by_sid: BTreeMap<String, T>,
}

/// Log-likelihood gain from adding surprisal under one decoding variant.
pub fn delta_ll_pipeline<T: Scalar>(
    scores: &HashMap<String, SentenceScore<T>>,
    rts: &[RtRow],
    variant: Variant,
    opts: &DeltaLlOptions,
) -> Result<DeltaLlReport<T>> {
    let freqs = FreqTable::from_rows(rts);
    let kept = filter_rt(rts, opts.kind);
    let rows = build_rows(scores, &kept, &freqs, RowOptions::new(variant, opts.transform))?;
    if rows.is_empty() {
        return Err(Error::ReadingTimes("no rows survive filtering".into()));
    }
    let full_spec = opts.base.clone().without(Predictor::Surp).with(Predictor::Surp);
    let base_design = DesignMatrix::from_rows(&rows, &opts.base.clone().without(Predictor::Surp))?;
    let full_design = DesignMatrix::from_rows(&rows, &full_spec)?;
    let base = fit_ols(&base_design)?;
    let full = fit_ols(&full_design)?;
    let gain = delta_ll(&base, &full)?;

    let mut shuffled = full_design.column(Predictor::Surp.name()).expect("surp column");
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(opts.seed));
    let control = fit_ols(&full_design.with_column(Predictor::Surp.name(), &shuffled)?)?;
    let shuffled_delta_ll = delta_ll(&base, &control)?;

    let res = residuals(&full, &full_design)?;
    let sids: Vec<String> = rows.iter().map(|r| r.sid.clone()).collect();
    let sq: Vec<T> = res.iter().map(|&e| e * e).collect();
    Ok(DeltaLlReport {
        variant,
        n: rows.len(),
        base_log_likelihood: base.log_likelihood.expect("checked by delta_ll"),
        full_log_likelihood: full.log_likelihood.expect("checked by delta_ll"),
        delta_ll: gain,
        shuffled_delta_ll,
        surp_coefficient: full.coefficient(Predictor::Surp.name()).expect("surp column"),
        base,
        full,
        sq_err_by_sid: aggregate_by(&sids, &sq),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct VariantComparison<T> {
    pub wl: DeltaLlReport<T>,
    pub wt: DeltaLlReport<T>,
    /// `ΔLL_WT − ΔLL_WL`; positive when WT surprisal explains more.
    pub delta_wt_minus_wl: T,
    /// Sign-flip test on per-sentence squared errors (WL − WT).
    pub permutation: PermutationResult<T>,
}

pub fn compare_variants<T: Scalar>(
    scores: &HashMap<String, SentenceScore<T>>,
    rts: &[RtRow],
    opts: &DeltaLlOptions,
    n_perm: usize,
) -> Result<VariantComparison<T>> {
    let wl = delta_ll_pipeline(scores, rts, Variant::Wl, opts)?;
    let wt = delta_ll_pipeline(scores, rts, Variant::Wt, opts)?;
    let permutation = permutation_test(&wl.sq_err_by_sid, &wt.sq_err_by_sid, n_perm, opts.seed)?;
    Ok(VariantComparison {
        delta_wt_minus_wl: wt.delta_ll - wl.delta_ll,
        wl,
        wt,
        permutation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{GardenConfig, GardenCorpus};

    fn small() -> GardenCorpus {
        GardenCorpus::generate(GardenConfig {
            train_sentences: 4000,
            fillers: 30,
            items: 8,
            subjects: 4,
            nrt_sentences: 60,
            ..GardenConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn pipelines_run_on_small_corpus() {
        let c = small();
        let scores = c.scores().unwrap();
        let gp = garden_path_pipeline(&scores, &c.fillers, &c.garden_path, Variant::Wl, &GardenPathOptions::new(1)).unwrap();
        assert_eq!(gp.effects.len(), 3);
        let cmp = compare_variants(&scores, &c.nrt_wl, &DeltaLlOptions::new(1), 1000).unwrap();
        assert!(cmp.wl.delta_ll > 0.0);
        assert!(cmp.wl.shuffled_delta_ll < cmp.wl.delta_ll);
        assert_eq!(cmp.delta_wt_minus_wl, cmp.wt.delta_ll - cmp.wl.delta_ll);
    }
}
