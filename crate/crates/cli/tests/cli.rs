use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn garden(name: &str) -> String {
    fixtures().join("garden").join(name).display().to_string()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wordprob")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn score_reports_both_variants_per_word() {
    let model = fixtures().join("garden.tab");
    let o = run(&["score", "--model", model.to_str().unwrap(), "--text", " a", "--variant", "both"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("sid,widx,word,wl_bits,wt_bits"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&row[..3], &["text", "0", "a"]);
    // WL: −log2 0.9; WT: −log2 0.1
    assert!((row[3].parse::<f64>().unwrap() + 0.9f64.log2()).abs() < 1e-9);
    assert!((row[4].parse::<f64>().unwrap() + 0.1f64.log2()).abs() < 1e-9);
}

#[test]
fn records_and_model_routes_agree_on_words() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let o = run(&["score", "--records", &garden("records.jsonl"), "--variant", "wl", "--out", a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = run(&[
        "score", "--corpus", &garden("train.txt"), "--vocab", &garden("vocab.tsv"), "--order", "4", "--alpha", "0.01",
        "--sentences", &garden("sentences.tsv"), "--variant", "wl", "--out", b.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = |p: &Path| -> Vec<csv::StringRecord> {
        csv::Reader::from_path(p).unwrap().records().map(Result::unwrap).collect()
    };
    let (a, b) = (rows(&a), rows(&b));
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!((&x[0], &x[1], &x[2]), (&y[0], &y[1], &y[2]));
        let (x, y): (f64, f64) = (x[3].parse().unwrap(), y[3].parse().unwrap());
        assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()), "{x} vs {y}");
    }
}

#[test]
fn missing_model_names_the_path() {
    let o = run(&["score", "--model", "/nonexistent/model.tab", "--text", " a"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/nonexistent/model.tab"));
}

#[test]
fn unknown_subcommand_is_invalid_input() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn witness_table_sums_to_two() {
    let o = run(&["check-omega", "--witness", "--variant", "wl"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains('2'));
}

#[test]
fn wl_excess_mass_warns_but_succeeds() {
    let model = fixtures().join("garden.tab");
    let o = run(&["check-omega", "--model", model.to_str().unwrap(), "--variant", "wl", "--depth", "50"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).to_lowercase().contains("warning"));
}

#[test]
fn wt_mass_stays_below_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("omega.json");
    let model = fixtures().join("garden.tab");
    let o = run(&[
        "check-omega", "--model", model.to_str().unwrap(), "--variant", "wt", "--depth", "200", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    let total = json[0]["cumulative"].as_f64().unwrap();
    assert!((total - 1.0).abs() < 1e-9 && total <= 1.0, "{total}");
}

#[test]
fn empty_reading_times_are_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let rt = dir.path().join("rt.csv");
    std::fs::write(&rt, "").unwrap();
    let o = run(&["regress", "--records", &garden("records.jsonl"), "--rt", rt.to_str().unwrap(), "--seed", "1"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn regress_requires_a_seed() {
    let o = run(&["regress", "--records", &garden("records.jsonl"), "--rt", &garden("nrt_wl.csv")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--seed"));
}

#[test]
fn misaligned_words_fail_at_runtime() {
    let dir = tempfile::tempdir().unwrap();
    let rt = dir.path().join("rt.csv");
    let text = std::fs::read_to_string(garden("fillers.csv")).unwrap().replacen(",pilot,", ",pilots,", 1);
    std::fs::write(&rt, text).unwrap();
    let o = run(&["regress", "--records", &garden("records.jsonl"), "--rt", rt.to_str().unwrap(), "--seed", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("pilots"));
}

#[test]
fn records_conflict_with_a_model() {
    let model = fixtures().join("garden.tab");
    let o = run(&[
        "regress", "--records", &garden("records.jsonl"), "--model", model.to_str().unwrap(), "--rt",
        &garden("nrt_wl.csv"), "--seed", "1",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

fn regress_once(out: &Path) -> serde_json::Value {
    let o = run(&[
        "regress", "--records", &garden("records.jsonl"), "--rt", &garden("nrt_wt.csv"), "--seed", "5", "--n-perm",
        "500", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap()
}

#[test]
fn regress_report_is_complete_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    let json = regress_once(&a);
    regress_once(&b);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let variants = json["variants"].as_array().unwrap();
    assert_eq!(variants.len(), 2);
    for v in variants {
        let gain = v["delta_ll"].as_f64().unwrap();
        let shuffled = v["shuffled_delta_ll"].as_f64().unwrap();
        assert!(gain > 50.0 && shuffled.abs() < 10.0, "{gain} {shuffled}");
    }
    assert!(json["delta_wt_minus_wl"].as_f64().unwrap() > 0.0);
    assert!(json["permutation"]["p_value"].as_f64().unwrap() < 0.1);
}

#[test]
fn gp_effect_writes_one_row_per_variant_and_region() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("effects.csv");
    let o = run(&[
        "gp-effect", "--records", &garden("records.jsonl"), "--rt", &garden("fillers.csv"), "--gp",
        &garden("items.csv"), "--seed", "3", "--n-boot", "200", "--variant", "both", "--csv", csv.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("variant,region,effect,ci_low,ci_high"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 6);
    for r in &rows {
        let (e, lo, hi): (f64, f64, f64) = (r[2].parse().unwrap(), r[3].parse().unwrap(), r[4].parse().unwrap());
        assert!(lo <= e && e <= hi);
    }
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    let model = fixtures().join("garden.tab");
    std::fs::write(&config, serde_json::json!({ "model": model, "variant": "wt", "text": " a" }).to_string()).unwrap();
    let o = run(&["--config", config.to_str().unwrap(), "score"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("sid,widx,word,wt_bits\n"));
    let o = run(&["--config", config.to_str().unwrap(), "score", "--variant", "wl"]);
    assert!(stdout(&o).starts_with("sid,widx,word,wl_bits\n"));

    std::fs::write(&config, r#"{"modle": "x"}"#).unwrap();
    let o = run(&["--config", config.to_str().unwrap(), "score"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn trained_table_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let tab = dir.path().join("model.tab");
    let corpus = dir.path().join("train.txt");
    std::fs::write(&corpus, "▁the ▁doc tor ▁ran .\n▁the ▁dog ▁ran ▁far .\n").unwrap();
    let vocab = garden("vocab.tsv");
    let o = run(&[
        "train-ngram", "--corpus", corpus.to_str().unwrap(), "--vocab", &vocab, "--order", "2", "--out",
        tab.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let sentences = dir.path().join("s.tsv");
    std::fs::write(&sentences, "x\t▁the ▁doc tor ▁ran ▁far .\n").unwrap();
    let via_table = run(&["score", "--model", tab.to_str().unwrap(), "--sentences", sentences.to_str().unwrap()]);
    let via_corpus = run(&[
        "score", "--corpus", corpus.to_str().unwrap(), "--vocab", &vocab, "--order", "2", "--sentences",
        sentences.to_str().unwrap(),
    ]);
    assert_eq!(via_table.status.code(), Some(0), "{}", stderr(&via_table));
    assert_eq!(stdout(&via_table), stdout(&via_corpus));
}

#[test]
fn generated_corpus_matches_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["gen-synth", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for name in [
        "vocab.tsv", "train.txt", "sentences.tsv", "records.jsonl", "fillers.csv", "items.csv", "nrt_wl.csv",
        "nrt_wt.csv",
    ] {
        let fresh = std::fs::read(dir.path().join(name)).unwrap();
        let fixed = std::fs::read(garden(name)).unwrap();
        assert!(fresh == fixed, "{name} differs from the checked-in fixture");
    }
}
