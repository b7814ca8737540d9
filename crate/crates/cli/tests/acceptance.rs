//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs on tabular and n-gram models plus the checked-in
//! fixtures; expected values come from closed forms or brute force here.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use wordprob::decoding::{score_from_record, score_sentence};
use wordprob::ingest::{read_records, read_rt};
use wordprob::normcheck::{enumerate_words, p_omega_partial};
use wordprob::pipeline::{compare_variants, garden_path_pipeline, DeltaLlOptions, GardenPathOptions};
use wordprob::regress::{delta_ll, fit_ols, permutation_test, DesignMatrix};
use wordprob::synth::{parse_corpus, parse_sentences, random_sentence, random_tabular, random_vocab};
use wordprob::{ConditionalModel, Mode, NGram64, Segmentation, SentenceScore64, Tabular64, TokenId, Variant, Vocabulary};

type Outcome = Result<String, String>;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    check(elapsed < limit, || format!("took {elapsed:?}, limit {limit:?}"))
}

fn witness() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let json = dir.path().join("witness.json");
    let out = Command::new(env!("CARGO_BIN_EXE_wordprob"))
        .args(["check-omega", "--witness", "--variant", "wl", "--out"])
        .arg(&json)
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    check(out.status.code() == Some(0), || format!("exit status {:?}", out.status))?;
    let reports: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&json).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let r = &reports[0];
    let cumulative = r["cumulative"].as_f64().ok_or("no cumulative")?;
    let depth = r["per_depth"].as_array().map_or(0, Vec::len);
    check(cumulative == 2.0 && depth == 2, || format!("cumulative {cumulative} at depth {depth}"))?;
    within(elapsed, Duration::from_secs(1))?;
    Ok(format!("WL cumulative = {cumulative} at depth {depth} in {elapsed:.2?}"))
}

fn geometric_series() -> Outcome {
    let start = Instant::now();
    let m = Tabular64::from_path(fixtures().join("garden.tab")).map_err(|e| e.to_string())?;
    let wt = p_omega_partial::<f64, _>(&m, &[], 200, Mode::Wt).map_err(|e| e.to_string())?;
    // one word per depth: ▁a x^(n−1); WT = 0.9^n · 0.1 / 0.9, WL = 0.9^n
    let mut worst = 0.0f64;
    for (n, d) in wt.per_depth.iter().enumerate() {
        let oracle = 0.1 * 0.9f64.powi(n as i32);
        worst = worst.max((d.mass - oracle).abs());
    }
    check(worst <= 1e-12, || format!("WT term-wise error {worst:e}"))?;
    let gap = (wt.cumulative - 1.0).abs();
    check(gap < 1e-9, || format!("|WT cumulative − 1| = {gap:e} at depth 200"))?;
    let wl2 = p_omega_partial::<f64, _>(&m, &[], 2, Mode::Wl).map_err(|e| e.to_string())?.cumulative;
    let wl50 = p_omega_partial::<f64, _>(&m, &[], 50, Mode::Wl).map_err(|e| e.to_string())?;
    let mut wl_worst = 0.0f64;
    for (n, d) in wl50.per_depth.iter().enumerate() {
        wl_worst = wl_worst.max((d.mass - 0.9f64.powi(n as i32 + 1)).abs());
    }
    check(wl_worst <= 1e-12, || format!("WL term-wise error {wl_worst:e}"))?;
    // the depth-2 partial sum is exactly 0.9 + 0.81
    check(wl2 >= 1.71 - 1e-12, || format!("WL depth-2 mass {wl2}"))?;
    check(wl50.cumulative > 8.9, || format!("WL depth-50 mass {}", wl50.cumulative))?;
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(5))?;
    Ok(format!(
        "|WT−1| = {gap:.3e}, term error ≤ {:.1e}; WL mass {wl2:.12} (depth 2), {:.6} (depth 50) in {elapsed:.2?}",
        worst.max(wl_worst),
        wl50.cumulative
    ))
}

fn telescoping() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut failures = 0;
    let mut worst = 0.0f64;
    let trials = 1000;
    for _ in 0..trials {
        let vocab = random_vocab(rng.random_range(1..=3), rng.random_range(0..=3));
        let m = random_tabular(&vocab, rng.random_range(0..=2), &mut rng);
        let n_words = rng.random_range(1..=8);
        let toks = random_sentence(&vocab, n_words, 3, &mut rng);
        let seg = Segmentation::from_tokens(toks, &vocab).map_err(|e| e.to_string())?;
        let s: SentenceScore64 = score_sentence(&m, &seg).map_err(|e| e.to_string())?;
        let err = ((s.total_logprob(Variant::Wt) - s.total_logprob(Variant::Wl))
            - (s.final_b_logmass - s.initial_b_logmass))
            .abs();
        worst = worst.max(err);
        if err > 1e-9 {
            failures += 1;
        }
    }
    check(failures == 0, || format!("{failures} of {trials} sentences off by up to {worst:e}"))?;
    Ok(format!("{trials} random models and sentences, max error {worst:.2e}"))
}

fn monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut checked = 0usize;
    for _ in 0..100 {
        let vocab = random_vocab(rng.random_range(1..=2), rng.random_range(1..=2));
        let m = random_tabular(&vocab, rng.random_range(0..=2), &mut rng);
        let words = enumerate_words::<f64, _>(&m, &[], 6).map_err(|e| e.to_string())?;
        let wl: HashMap<&[TokenId], f64> = words.iter().map(|w| (w.tokens.as_slice(), w.wl_prob)).collect();
        for w in words.iter().filter(|w| w.tokens.len() > 1) {
            let prefix = wl[&w.tokens[..w.tokens.len() - 1]];
            check(w.wl_prob <= prefix, || {
                format!("WL extension {:e} exceeds prefix {:e}", w.wl_prob, prefix)
            })?;
            checked += 1;
        }
    }
    let m = Tabular64::from_path(fixtures().join("reversal.tab")).map_err(|e| e.to_string())?;
    let words = enumerate_words::<f64, _>(&m, &[], 2).map_err(|e| e.to_string())?;
    let (short, long) = (words[0].wt_prob, words[1].wt_prob);
    check((long - 0.855).abs() <= 1e-12 && (short - 0.1).abs() <= 1e-12 && long > short, || {
        format!("WT(▁a x) = {long}, WT(▁a) = {short}")
    })?;
    Ok(format!("{checked} extensions satisfy WL(w·i) ≤ WL(w); WT(▁a x) = {long:.12} > WT(▁a) = {short:.12}"))
}

fn design(cols: &[Vec<f64>], y: &[f64]) -> DesignMatrix<f64> {
    let names = (0..cols.len()).map(|j| format!("x{j}")).collect();
    let rows = (0..y.len()).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
    DesignMatrix::new(names, rows, y.to_vec()).expect("finite design")
}

fn regression_engine() -> Outcome {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let noise = Normal::new(0.0, 0.1).expect("noise");
    let n = 1000;
    let x1: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
    let x2: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
    let y: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * x1[i] - 2.0 * x2[i] + noise.sample(&mut rng)).collect();
    let fit = fit_ols(&design(&[x1, x2], &y)).map_err(|e| e.to_string())?;
    let planted = [1.0, 0.5, -2.0];
    let got = [fit.intercept, fit.coefficients[0], fit.coefficients[1]];
    let recovery = planted.iter().zip(&got).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    check(recovery <= 0.02, || format!("planted coefficients off by {recovery}"))?;

    let mut worst_closed = 0.0f64;
    let mut min_gain = f64::INFINITY;
    for _ in 0..1000 {
        let n = rng.random_range(15..80);
        let p = rng.random_range(2..6);
        let cols: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| normal.sample(&mut rng)).collect()).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| cols.iter().map(|c| 0.2 * c[i]).sum::<f64>() + normal.sample(&mut rng))
            .collect();
        let k = rng.random_range(0..p);
        let base = fit_ols(&design(&cols[..k], &y)).map_err(|e| e.to_string())?;
        let full = fit_ols(&design(&cols, &y)).map_err(|e| e.to_string())?;
        let gain = delta_ll(&base, &full).map_err(|e| e.to_string())?;
        min_gain = min_gain.min(gain);
        let closed = n as f64 / 2.0 * (base.sigma2 / full.sigma2).ln();
        worst_closed = worst_closed.max((gain - closed).abs());
    }
    check(min_gain >= -1e-9, || format!("nested ΔLL as low as {min_gain:e}"))?;
    check(worst_closed <= 1e-8, || format!("closed-form ΔLL off by {worst_closed:e}"))?;

    let mut compared = 0;
    for g in 1..=12usize {
        for trial in 0..5u64 {
            let a: BTreeMap<String, f64> = (0..g).map(|i| (format!("{i:02}"), rng.random_range(0.0..5.0))).collect();
            let b: BTreeMap<String, f64> = (0..g).map(|i| (format!("{i:02}"), rng.random_range(0.0..5.0))).collect();
            let d: Vec<f64> = a.values().zip(b.values()).map(|(x, y)| x - y).collect();
            let observed = d.iter().sum::<f64>().abs();
            let extreme = (0u32..1 << g)
                .filter(|mask| {
                    let s: f64 = d.iter().enumerate().map(|(i, x)| if mask >> i & 1 == 1 { -x } else { *x }).sum();
                    s.abs() >= observed - 1e-9 * (1.0 + observed)
                })
                .count();
            let oracle = extreme as f64 / (1u64 << g) as f64;
            let got = permutation_test(&a, &b, 10_000, trial).map_err(|e| e.to_string())?;
            check(got.p_value == oracle, || format!("{g} groups: p = {} vs enumeration {oracle}", got.p_value))?;
            compared += 1;
        }
    }
    Ok(format!(
        "recovery error {recovery:.4}; min nested ΔLL {min_gain:.2e}; closed-form error {worst_closed:.1e}; {compared} permutation tests match enumeration"
    ))
}

fn record_scores(path: &Path) -> Result<HashMap<String, SentenceScore64>, String> {
    read_records(path)
        .map_err(|e| e.to_string())?
        .iter()
        .map(|r| Ok((r.sid.clone(), score_from_record(r).map_err(|e| e.to_string())?)))
        .collect()
}

fn garden_path_mechanism() -> Outcome {
    let start = Instant::now();
    let dir = fixtures().join("garden");
    let scores = record_scores(&dir.join("records.jsonl"))?;
    let fillers = read_rt(dir.join("fillers.csv")).map_err(|e| e.to_string())?;
    let items = read_rt(dir.join("items.csv")).map_err(|e| e.to_string())?;
    let opts = GardenPathOptions::new(2024);
    let wl = garden_path_pipeline(&scores, &fillers, &items, Variant::Wl, &opts).map_err(|e| e.to_string())?;
    let wt = garden_path_pipeline(&scores, &fillers, &items, Variant::Wt, &opts).map_err(|e| e.to_string())?;
    let effect = |r: &wordprob::pipeline::GardenPathReport<f64>, region: &str| {
        r.effects.iter().find(|e| e.region == region).cloned().ok_or(format!("no {region} effect"))
    };

    // the constructed property: WT moves the boundary cost off the critical word
    let mut diff = [0.0f64; 2];
    let mut n_items = 0;
    for (sid, s) in scores.iter().filter(|(sid, _)| sid.starts_with('g') && sid.ends_with('a')) {
        let control = &scores[&format!("{}u", &sid[..sid.len() - 1])];
        for (k, v) in Variant::BOTH.iter().enumerate() {
            diff[k] += s.words[6].surprisal(*v) - control.words[6].surprisal(*v);
        }
        n_items += 1;
    }
    check(n_items > 0 && diff[1] < diff[0], || {
        format!("critical surprisal difference WT {} vs WL {}", diff[1], diff[0])
    })?;

    let mut lines = Vec::new();
    for region in ["spillover1", "spillover2"] {
        let (a, b) = (effect(&wl, region)?, effect(&wt, region)?);
        check(b.effect < a.effect, || format!("{region}: WT {} not below WL {}", b.effect, a.effect))?;
        lines.push(format!("{region} WL {:.2} → WT {:.2}", a.effect, b.effect));
    }
    let (a, b) = (effect(&wl, "critical")?, effect(&wt, "critical")?);
    let inside = |x: f64, e: &wordprob::EffectEstimate64| e.ci_low <= x && x <= e.ci_high;
    check(inside(b.effect, &a) && inside(a.effect, &b), || {
        format!(
            "critical: WT {:.2} [{:.2}, {:.2}] vs WL {:.2} [{:.2}, {:.2}]",
            b.effect, b.ci_low, b.ci_high, a.effect, a.ci_low, a.ci_high
        )
    })?;
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(30))?;
    Ok(format!(
        "{}; critical WL {:.2} ± {:.2} vs WT {:.2} ± {:.2} in {elapsed:.2?}",
        lines.join(", "),
        a.effect,
        a.ci_half_width,
        b.effect,
        b.ci_half_width
    ))
}

fn delta_ll_direction() -> Outcome {
    let dir = fixtures().join("garden");
    let vocab = Vocabulary::from_path(dir.join("vocab.tsv")).map_err(|e| e.to_string())?;
    let read = |name: &str| std::fs::read_to_string(dir.join(name)).map_err(|e| e.to_string());
    let corpus = parse_corpus(&read("train.txt")?, &vocab).map_err(|e| e.to_string())?;
    let model = NGram64::train(vocab.clone(), &corpus, 4, 0.01).map_err(|e| e.to_string())?;
    let mut scores = HashMap::new();
    for (sid, toks) in parse_sentences(&read("sentences.tsv")?, &vocab).map_err(|e| e.to_string())? {
        let seg = Segmentation::from_tokens(toks, model.vocab()).map_err(|e| e.to_string())?;
        scores.insert(sid, score_sentence(&model, &seg).map_err(|e| e.to_string())?);
    }
    let opts = DeltaLlOptions::new(99);
    let mut parts = Vec::new();
    for (name, expect_wt_better) in [("nrt_wl.csv", false), ("nrt_wt.csv", true)] {
        let rows = read_rt(dir.join(name)).map_err(|e| e.to_string())?;
        let cmp = compare_variants(&scores, &rows, &opts, 10_000).map_err(|e| e.to_string())?;
        let d = cmp.delta_wt_minus_wl;
        check((d > 0.0) == expect_wt_better && d != 0.0, || {
            format!("{name}: ΔLL_WT − ΔLL_WL = {d} (WL {}, WT {})", cmp.wl.delta_ll, cmp.wt.delta_ll)
        })?;
        parts.push(format!(
            "{name}: ΔLL_WL {:.2}, ΔLL_WT {:.2}, difference {d:+.2} (p = {:.4})",
            cmp.wl.delta_ll, cmp.wt.delta_ll, cmp.permutation.p_value
        ));
    }
    Ok(parts.join("; "))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("sample-space witness sums to 2 under WL", witness),
        ("geometric series: WT converges to 1, WL diverges", geometric_series),
        ("telescoping of WT minus WL log-probabilities", telescoping),
        ("WL monotonicity and the WT reversal table", monotonicity),
        ("regression engine", regression_engine),
        ("garden-path mechanism on the synthetic corpus", garden_path_mechanism),
        ("ΔLL direction harness", delta_ll_direction),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} of {} acceptance criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
