//! Subcommand bodies.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use wordprob::decoding::score_sentence;
use wordprob::format::sig12;
use wordprob::ingest::{write_records, write_rt, RtKind, RtRow, Transform};
use wordprob::normcheck::p_omega_partial;
use wordprob::pipeline::{
    compare_variants, delta_ll_pipeline, garden_path_pipeline, DeltaLlOptions, DeltaLlReport,
    GardenPathOptions, GardenPathReport,
};
use wordprob::probsource::reference::witness_table;
use wordprob::regress::{DesignSpec, EffectOptions, PermutationResult, Predictor};
use wordprob::synth::{GardenConfig, GardenCorpus};
use wordprob::vocab::tokenize_greedy;
use wordprob::{ConditionalModel, Mode, OmegaReport64, SentenceScore64, Variant};

use crate::config::{
    invalid, load_model, load_rt, load_scores, required, runtime, train_ngram, CliResult, Failure,
    RunConfig,
};
use crate::{
    Cli, Command, FitArgs, GenArgs, GpArgs, KindArg, OmegaArgs, RegressArgs, ScoreArgs, TrainArgs,
    TransformArg, VariantArg,
};

/// Upper tolerance on trailing-whitespace word mass.
const WT_BOUND_TOLERANCE: f64 = 1e-9;

const FIT_NOTES: &[&str] = &[
    "ordinary least squares; random intercepts are approximated by optional fixed indicator columns",
    "smooth terms are linear, with optional squared length and position terms",
    "residual variance is the maximum-likelihood estimate (RSS / n)",
];

const REGRESS_NOTES: &[&str] = &[
    "delta_ll is the log-likelihood of the model with surprisal minus the model without it",
    "the permutation test is a two-sided sign-flip test on per-sentence sums of squared residuals (WL minus WT)",
];

const EFFECT_NOTES: &[&str] = &[
    "effects are condition-mean differences of predicted reading times (ambiguous minus unambiguous), without random-effect predictions",
    "intervals are percentile bootstrap intervals over items",
];

pub fn run(cli: Cli) -> CliResult<()> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Score(a) => score(a, &cfg),
        Command::CheckOmega(a) => check_omega(a, &cfg),
        Command::Regress(a) => regress(a, &cfg),
        Command::GpEffect(a) => gp_effect(a, &cfg),
        Command::TrainNgram(a) => train(a, &cfg),
        Command::GenSynth(a) => gen_synth(a, &cfg),
    }
}

fn variants(v: VariantArg) -> &'static [Variant] {
    match v {
        VariantArg::Wl => &[Variant::Wl],
        VariantArg::Wt => &[Variant::Wt],
        VariantArg::Both => &Variant::BOTH,
    }
}

fn emit(out: Option<&Path>, content: &[u8]) -> CliResult<()> {
    match out {
        Some(path) => fs::write(path, content)
            .map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(content)
            .map_err(|e| Failure::Runtime(format!("cannot write to stdout: {e}"))),
    }
}

fn to_json(value: &impl Serialize) -> CliResult<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn score(a: ScoreArgs, cfg: &RunConfig) -> CliResult<()> {
    let src = cfg.scores(a.scores);
    let variant = a.variant.or(cfg.variant).unwrap_or(VariantArg::Both);
    let out = a.out.or_else(|| cfg.out.clone());
    let scored: Vec<(String, SentenceScore64)> = match a.text.or_else(|| cfg.text.clone()) {
        Some(text) => {
            if src.records.is_some() || src.sentences.is_some() {
                return Err(Failure::Invalid("--text cannot be combined with --records or --sentences".into()));
            }
            let model = load_model(&src.source)?;
            let seg = tokenize_greedy(&text, model.vocab()).map_err(invalid)?;
            vec![("text".to_owned(), score_sentence(&*model, &seg).map_err(runtime)?)]
        }
        None => load_scores(&src)?,
    };

    let vs = variants(variant);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["sid".to_owned(), "widx".into(), "word".into()];
    header.extend(vs.iter().map(|v| format!("{v}_bits")));
    let csv_err = |e: csv::Error| Failure::Runtime(e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for (sid, s) in &scored {
        for (i, word) in s.words.iter().enumerate() {
            let mut rec = vec![sid.clone(), i.to_string(), word.surface.clone()];
            rec.extend(vs.iter().map(|&v| sig12(word.surprisal(v))));
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Failure::Runtime(e.to_string()))?;
    emit(out.as_deref(), &bytes)
}

fn check_omega(a: OmegaArgs, cfg: &RunConfig) -> CliResult<()> {
    let witness = a.witness || cfg.witness.unwrap_or(false);
    let src = cfg.source(a.source);
    let model: Box<dyn ConditionalModel<f64>> = if witness {
        if src.model.is_some() || src.corpus.is_some() {
            return Err(Failure::Invalid("--witness uses a built-in table; drop --model/--corpus".into()));
        }
        Box::new(witness_table::<f64>())
    } else {
        load_model(&src)?
    };
    let depth = a.depth.or(cfg.depth).unwrap_or(if witness { 2 } else { 10 });
    if depth == 0 {
        return Err(Failure::Invalid("--depth must be at least 1".into()));
    }
    let ctx = match a.context.or_else(|| cfg.context.clone()) {
        Some(c) if !c.trim().is_empty() => model.vocab().ids_of(&c).map_err(invalid)?,
        _ => Vec::new(),
    };
    let modes: &[Mode] = match a.variant.or(cfg.variant).unwrap_or(VariantArg::Both) {
        VariantArg::Wl => &[Mode::Wl],
        VariantArg::Wt => &[Mode::Wt],
        VariantArg::Both => &[Mode::Wl, Mode::Wt],
    };

    let mut reports: Vec<OmegaReport64> = Vec::new();
    let mut table = String::new();
    for &mode in modes {
        let r = p_omega_partial(&*model, &ctx, depth, mode).map_err(runtime)?;
        if !table.is_empty() {
            table.push('\n');
        }
        table.push_str(&r.to_table_string());
        reports.push(r);
    }
    emit(None, table.as_bytes())?;
    if let Some(out) = a.out.or_else(|| cfg.out.clone()) {
        emit(Some(&out), &to_json(&reports)?)?;
    }

    for r in &reports {
        match r.mode {
            Mode::Wl if r.cumulative > 1.0 => eprintln!(
                "warning: WL word mass {} exceeds 1 at depth {}; chain-rule word probabilities are not normalized{}",
                sig12(r.cumulative),
                r.depth(),
                r.tail_bound.map_or(String::new(), |t| format!(" (remaining mass at most {})", sig12(t)))
            ),
            Mode::Wt if r.exceeds_one(WT_BOUND_TOLERANCE) => {
                return Err(Failure::Invariant(format!(
                    "WT word mass {} exceeds 1 + {WT_BOUND_TOLERANCE}",
                    sig12(r.cumulative)
                )))
            }
            Mode::Wt if r.certified(WT_BOUND_TOLERANCE) == Some(false) => {
                return Err(Failure::Invariant(format!(
                    "WT word mass {} is farther from 1 than the tail bound {}",
                    sig12(r.cumulative),
                    sig12(r.tail_bound.unwrap_or(f64::NAN))
                )))
            }
            _ => {}
        }
    }
    Ok(())
}

struct FitChoice {
    variant: VariantArg,
    kind: RtKind,
    transform: Option<Transform>,
    seed: u64,
    quadratic: bool,
    subject_intercepts: bool,
    item_intercepts: bool,
    out: Option<std::path::PathBuf>,
}

fn fit_choice(f: FitArgs, cfg: &RunConfig) -> CliResult<FitChoice> {
    Ok(FitChoice {
        variant: f.variant.or(cfg.variant).unwrap_or(VariantArg::Both),
        kind: match f.kind.or(cfg.kind).unwrap_or(KindArg::Spr) {
            KindArg::Spr => RtKind::Spr,
            KindArg::Gpd => RtKind::Gpd,
        },
        transform: f.transform.or(cfg.transform).map(|t| match t {
            TransformArg::Log => Transform::Log,
            TransformArg::Identity => Transform::Identity,
        }),
        seed: required(f.seed.or(cfg.seed), "seed")?,
        quadratic: f.quadratic || cfg.quadratic.unwrap_or(false),
        subject_intercepts: f.subject_intercepts || cfg.subject_intercepts.unwrap_or(false),
        item_intercepts: f.item_intercepts || cfg.item_intercepts.unwrap_or(false),
        out: f.out.or_else(|| cfg.out.clone()),
    })
}

impl FitChoice {
    fn shape(&self, spec: DesignSpec) -> DesignSpec {
        let spec = if self.quadratic { spec.quadratic() } else { spec };
        spec.with_subject_intercepts(self.subject_intercepts)
            .with_item_intercepts(self.item_intercepts)
    }
}

fn scores_by_sid(scored: Vec<(String, SentenceScore64)>) -> HashMap<String, SentenceScore64> {
    scored.into_iter().collect()
}

#[derive(Serialize)]
struct RegressReport<'a> {
    kind: RtKind,
    transform: Transform,
    seed: u64,
    variants: Vec<&'a DeltaLlReport<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta_wt_minus_wl: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    permutation: Option<&'a PermutationResult<f64>>,
    notes: Vec<&'static str>,
}

fn regress(a: RegressArgs, cfg: &RunConfig) -> CliResult<()> {
    let fit = fit_choice(a.fit, cfg)?;
    let src = cfg.scores(a.scores);
    let rt_path = required(a.rt.or_else(|| cfg.rt.clone()), "rt")?;
    let rows = load_rt(&rt_path)?;
    let scores = scores_by_sid(load_scores(&src)?);
    let n_perm = a.n_perm.or(cfg.n_perm).unwrap_or(10_000);
    let base = match fit.kind {
        RtKind::Spr => DesignSpec::spr_base(),
        RtKind::Gpd => DesignSpec::gpd_base(),
    };
    let opts = DeltaLlOptions {
        base: fit.shape(base),
        transform: fit.transform.unwrap_or(Transform::Log),
        kind: fit.kind,
        seed: fit.seed,
    };
    let notes = FIT_NOTES.iter().chain(REGRESS_NOTES).copied().collect();

    let json = if fit.variant == VariantArg::Both {
        let cmp = compare_variants(&scores, &rows, &opts, n_perm).map_err(runtime)?;
        to_json(&RegressReport {
            kind: opts.kind,
            transform: opts.transform,
            seed: opts.seed,
            variants: vec![&cmp.wl, &cmp.wt],
            delta_wt_minus_wl: Some(cmp.delta_wt_minus_wl),
            permutation: Some(&cmp.permutation),
            notes,
        })?
    } else {
        let v = variants(fit.variant)[0];
        let r = delta_ll_pipeline(&scores, &rows, v, &opts).map_err(runtime)?;
        to_json(&RegressReport {
            kind: opts.kind,
            transform: opts.transform,
            seed: opts.seed,
            variants: vec![&r],
            delta_wt_minus_wl: None,
            permutation: None,
            notes,
        })?
    };
    emit(fit.out.as_deref(), &json)
}

#[derive(Serialize)]
struct EffectReport<'a> {
    kind: RtKind,
    transform: Transform,
    seed: u64,
    n_boot: usize,
    variants: &'a [GardenPathReport<f64>],
    notes: Vec<&'static str>,
}

fn region_labels(rows: &[RtRow]) -> Vec<String> {
    let mut labelled: Vec<(usize, &str)> = rows
        .iter()
        .filter_map(|r| r.region.as_deref().map(|l| (r.widx, l)))
        .collect();
    labelled.sort();
    let mut out: Vec<String> = Vec::new();
    for (_, l) in labelled {
        if !out.iter().any(|o| o == l) {
            out.push(l.to_owned());
        }
    }
    out
}

fn gp_effect(a: GpArgs, cfg: &RunConfig) -> CliResult<()> {
    let fit = fit_choice(a.fit, cfg)?;
    let src = cfg.scores(a.scores);
    let fillers = load_rt(&required(a.rt.or_else(|| cfg.rt.clone()), "rt")?)?;
    let items = load_rt(&required(a.gp.or_else(|| cfg.gp.clone()), "gp")?)?;
    let scores = scores_by_sid(load_scores(&src)?);
    let n_boot = a.n_boot.or(cfg.n_boot).unwrap_or(2000);
    if n_boot == 0 {
        return Err(Failure::Invalid("--n-boot must be at least 1".into()));
    }
    let regions = region_labels(&items);
    if regions.is_empty() {
        return Err(Failure::Invalid("no rows in the --gp file carry a region label".into()));
    }
    let mut spec = DesignSpec::filler();
    if fit.kind == RtKind::Gpd {
        spec = spec.with(Predictor::Slength).with(Predictor::Pfix);
    }
    let opts = GardenPathOptions {
        spec: fit.shape(spec),
        transform: fit.transform.unwrap_or(Transform::Identity),
        kind: fit.kind,
        effect: EffectOptions {
            n_boot,
            ..EffectOptions::new(fit.seed)
        },
        regions,
    };
    let reports = variants(fit.variant)
        .iter()
        .map(|&v| garden_path_pipeline(&scores, &fillers, &items, v, &opts).map_err(runtime))
        .collect::<CliResult<Vec<_>>>()?;

    if let Some(path) = a.csv.or_else(|| cfg.csv.clone()) {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Failure::Runtime(e.to_string());
        w.write_record(["variant", "region", "effect", "ci_low", "ci_high"]).map_err(csv_err)?;
        for r in &reports {
            for e in &r.effects {
                w.write_record([
                    r.variant.as_str().to_owned(),
                    e.region.clone(),
                    sig12(e.effect),
                    sig12(e.ci_low),
                    sig12(e.ci_high),
                ])
                .map_err(csv_err)?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Failure::Runtime(e.to_string()))?;
        emit(Some(&path), &bytes)?;
    }
    let json = to_json(&EffectReport {
        kind: opts.kind,
        transform: opts.transform,
        seed: fit.seed,
        n_boot,
        variants: &reports,
        notes: FIT_NOTES.iter().chain(EFFECT_NOTES).copied().collect(),
    })?;
    emit(fit.out.as_deref(), &json)
}

fn train(a: TrainArgs, cfg: &RunConfig) -> CliResult<()> {
    let src = cfg.source(a.source);
    if src.model.is_some() {
        return Err(Failure::Invalid("train-ngram takes --corpus, not --model".into()));
    }
    let corpus = required(src.corpus.clone(), "corpus")?;
    let model = train_ngram(&src, &corpus)?;
    let out = a.out.or_else(|| cfg.out.clone());
    emit(out.as_deref(), model.to_tabular().to_file_string().as_bytes())
}

fn gen_synth(a: GenArgs, cfg: &RunConfig) -> CliResult<()> {
    let dir = required(a.out.or_else(|| cfg.out.clone()), "out")?;
    let mut config = GardenConfig::default();
    if let Some(seed) = a.seed.or(cfg.seed) {
        config.seed = seed;
    }
    let corpus = GardenCorpus::generate(config).map_err(runtime)?;
    fs::create_dir_all(&dir).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let write = |name: &str, bytes: &[u8]| emit(Some(&dir.join(name)), bytes);
    write("vocab.tsv", corpus.vocab.to_file_string().as_bytes())?;
    write("train.txt", corpus.training_text().as_bytes())?;
    write("sentences.tsv", corpus.sentences_text().as_bytes())?;

    let mut buf = Vec::new();
    write_records(&mut buf, &corpus.records().map_err(runtime)?).map_err(runtime)?;
    write("records.jsonl", &buf)?;
    for (name, rows) in [
        ("fillers.csv", &corpus.fillers),
        ("items.csv", &corpus.garden_path),
        ("nrt_wl.csv", &corpus.nrt_wl),
        ("nrt_wt.csv", &corpus.nrt_wt),
    ] {
        let mut buf = Vec::new();
        write_rt(&mut buf, rows).map_err(runtime)?;
        write(name, &buf)?;
    }
    Ok(())
}
