//! Exchange formats and reading-time preprocessing.
//!
//! * [`LogprobRecord`] JSONL: per-token natural-log probabilities and the
//!   boundary mass at each of the `n + 1` positions of a sentence.
//! * Reading-time CSV with header
//!   `subject,item,sid,widx,word,rt,length,logfreq[,condition,region,slength,pfix,drop,nwords]`.
//!   `widx` is the 0-based whitespace-word position within the sentence.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decoding::{SentenceScore, Variant};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Slack allowed when checking a word-initial token's log probability
/// against the boundary log mass it belongs to.
pub const MEMBER_MASS_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordToken {
    pub t: String,
    pub lp: f64,
    pub b: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogprobRecord {
    pub sid: String,
    pub tokens: Vec<RecordToken>,
    /// Boundary log masses; entry `i` conditions on the first `i` tokens.
    pub bm: Vec<f64>,
}

impl LogprobRecord {
    /// Checks the record invariants, returning the offending field and a reason.
    pub fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        if self.tokens.is_empty() {
            return Err(("tokens", "no tokens".into()));
        }
        if self.bm.len() != self.tokens.len() + 1 {
            return Err((
                "bm",
                format!(
                    "b_mass_logps has {} entries, expected token count + 1 = {}",
                    self.bm.len(),
                    self.tokens.len() + 1
                ),
            ));
        }
        for (i, tok) in self.tokens.iter().enumerate() {
            if !tok.lp.is_finite() || tok.lp > 0.0 {
                return Err(("tokens.lp", format!("token {i} has log probability {}", tok.lp)));
            }
            if tok.b && tok.lp > self.bm[i] + MEMBER_MASS_TOLERANCE {
                return Err((
                    "tokens.lp",
                    format!(
                        "word-initial token {i} has log probability {} above the boundary log mass {}",
                        tok.lp, self.bm[i]
                    ),
                ));
            }
        }
        if let Some((i, x)) = self.bm.iter().enumerate().find(|(_, x)| !x.is_finite() || **x > 0.0) {
            return Err(("bm", format!("entry {i} is {x}")));
        }
        Ok(())
    }
}

/// Parses JSONL records, validating each line.
pub fn parse_records(reader: impl Read) -> Result<Vec<LogprobRecord>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Record {
            line: lineno,
            field: "line".into(),
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: LogprobRecord = serde_json::from_str(&line).map_err(|e| Error::Record {
            line: lineno,
            field: "record".into(),
            reason: e.to_string(),
        })?;
        rec.validate().map_err(|(field, reason)| Error::Record {
            line: lineno,
            field: field.into(),
            reason,
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<LogprobRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_records(file)
}

pub fn write_records(mut writer: impl Write, records: &[LogprobRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n").map_err(|e| Error::io("<records>", e))?;
    }
    Ok(())
}

/// One reading-time observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RtRow {
    pub subject: String,
    pub item: String,
    pub sid: String,
    pub widx: usize,
    pub word: String,
    /// Milliseconds; zero marks an unfixated word in eye-tracking data.
    pub rt: f64,
    pub length: usize,
    pub logfreq: f64,
    #[serde(default)]
    pub condition: Option<String>,
    #[serde(default)]
    pub region: Option<String>,
    /// Saccade length into the word, in words.
    #[serde(default)]
    pub slength: Option<f64>,
    /// Whether the previous word was fixated (0/1).
    #[serde(default)]
    pub pfix: Option<f64>,
    /// Precomputed exclusion flag (e.g. long incoming saccade); 1 drops the row.
    #[serde(default)]
    pub drop: Option<u8>,
    /// Words in the sentence; inferred from the largest `widx` when absent.
    #[serde(default)]
    pub nwords: Option<usize>,
}

impl RtRow {
    fn validate(&self) -> std::result::Result<(), String> {
        if !self.rt.is_finite() || self.rt < 0.0 {
            return Err(format!("rt {} is not a nonnegative number", self.rt));
        }
        if self.length < 1 {
            return Err("length must be at least 1".into());
        }
        if !self.logfreq.is_finite() {
            return Err(format!("logfreq {} is not finite", self.logfreq));
        }
        Ok(())
    }
}

/// Fills missing `nwords` from the largest `widx` seen per sentence.
pub fn fill_sentence_lengths(rows: &mut [RtRow]) {
    let mut longest: HashMap<String, usize> = HashMap::new();
    for r in rows.iter() {
        let n = longest.entry(r.sid.clone()).or_default();
        *n = (*n).max(r.widx + 1);
    }
    for r in rows.iter_mut() {
        if r.nwords.is_none() {
            r.nwords = Some(longest[&r.sid]);
        }
    }
}

pub fn parse_rt(reader: impl Read) -> Result<Vec<RtRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize::<RtRow>().enumerate() {
        let row = rec?;
        row.validate()
            .map_err(|e| Error::ReadingTimes(format!("data row {}: {e}", i + 1)))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::ReadingTimes("no observations".into()));
    }
    fill_sentence_lengths(&mut rows);
    Ok(rows)
}

pub fn read_rt(path: impl AsRef<Path>) -> Result<Vec<RtRow>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_rt(file)
}

pub fn write_rt(writer: impl Write, rows: &[RtRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<rt csv>", e))?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RtKind {
    /// Self-paced reading.
    Spr,
    /// Go-past durations from eye tracking.
    Gpd,
}

pub const SPR_MIN_MS: f64 = 100.0;
pub const SPR_MAX_MS: f64 = 3000.0;

/// Applies the exclusion rules for the given measure.
///
/// Both kinds drop sentence-initial and sentence-final words. Self-paced
/// reading also drops RTs below 100 ms or above 3000 ms (the bounds
/// themselves are kept); go-past data drops unfixated words and rows
/// flagged by `drop`.
pub fn filter_rt(rows: &[RtRow], kind: RtKind) -> Vec<RtRow> {
    let mut rows = rows.to_vec();
    if rows.iter().any(|r| r.nwords.is_none()) {
        fill_sentence_lengths(&mut rows);
    }
    rows.retain(|r| {
        let n = r.nwords.expect("filled above");
        let boundary = r.widx == 0 || r.widx + 1 >= n;
        let keep = match kind {
            RtKind::Spr => (SPR_MIN_MS..=SPR_MAX_MS).contains(&r.rt),
            RtKind::Gpd => r.rt > 0.0 && r.drop.unwrap_or(0) == 0,
        };
        keep && !boundary
    });
    rows
}

/// Log frequency of each word position, shared across subjects.
#[derive(Clone, Debug, Default)]
pub struct FreqTable {
    by_position: HashMap<(String, usize), f64>,
}

impl FreqTable {
    /// Collects frequencies from (typically unfiltered) rows; the first value
    /// seen for a position wins.
    pub fn from_rows(rows: &[RtRow]) -> Self {
        let mut by_position = HashMap::new();
        for r in rows {
            by_position.entry((r.sid.clone(), r.widx)).or_insert(r.logfreq);
        }
        FreqTable { by_position }
    }

    pub fn get(&self, sid: &str, widx: usize) -> Option<f64> {
        self.by_position.get(&(sid.to_owned(), widx)).copied()
    }
}

/// Parses `<word>\t<count>` lines.
pub fn parse_unigram_counts(text: &str) -> Result<HashMap<String, u64>> {
    let mut counts = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (w, c) = line
            .rsplit_once('\t')
            .ok_or_else(|| Error::ReadingTimes(format!("counts line {}: expected <word>\\t<count>", i + 1)))?;
        let c: u64 = c
            .trim()
            .parse()
            .map_err(|e| Error::ReadingTimes(format!("counts line {}: {e}", i + 1)))?;
        *counts.entry(w.to_owned()).or_default() += c;
    }
    Ok(counts)
}

/// `ln((count + 1) per million)` for each word.
pub fn log_freq_per_million(counts: &HashMap<String, u64>) -> HashMap<String, f64> {
    let total: u64 = counts.values().sum();
    let total = total.max(1) as f64;
    counts
        .iter()
        .map(|(w, &c)| (w.clone(), ((c as f64 + 1.0) * 1e6 / total).ln()))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    Identity,
    Log,
}

#[derive(Clone, Copy, Debug)]
pub struct RowOptions<T> {
    pub variant: Variant,
    pub transform: Transform,
    /// Value written into spillover predictors that fall before the
    /// sentence start; the companion indicator is set to 1.
    pub impute: T,
}

impl<T: Scalar> RowOptions<T> {
    pub fn new(variant: Variant, transform: Transform) -> Self {
        RowOptions {
            variant,
            transform,
            impute: T::zero(),
        }
    }
}

/// One observation ready for design-matrix assembly.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegressionRow<T> {
    pub response: T,
    pub rt: T,
    pub surp: T,
    pub surp_prev1: T,
    pub surp_prev2: T,
    pub freq: T,
    pub freq_prev1: T,
    pub freq_prev2: T,
    pub length: T,
    pub index: T,
    /// 1 when the word has no predecessor in its sentence.
    pub prev1_missing: T,
    /// 1 when the word has fewer than two predecessors.
    pub prev2_missing: T,
    pub slength: Option<T>,
    pub pfix: Option<T>,
    pub subject: String,
    pub item: String,
    pub sid: String,
    pub widx: usize,
    pub condition: Option<String>,
    pub region: Option<String>,
}

/// Joins reading times with scored words and lays out spillover predictors.
///
/// Rows come back ordered by sentence id, word index and subject. Spillover
/// surprisal comes from the scored sentence and spillover frequency from
/// `freqs`, so previous words need not survive filtering.
pub fn build_rows<T: Scalar>(
    scores: &HashMap<String, SentenceScore<T>>,
    rts: &[RtRow],
    freqs: &FreqTable,
    opts: RowOptions<T>,
) -> Result<Vec<RegressionRow<T>>> {
    let conv = |x: f64| T::from_f64(x).expect("finite");
    let mut out = Vec::with_capacity(rts.len());
    for r in rts {
        let align = |reason: String| Error::Alignment {
            sid: r.sid.clone(),
            widx: r.widx,
            reason,
        };
        let score = scores
            .get(&r.sid)
            .ok_or_else(|| align("no scored sentence with this id".into()))?;
        let word = score
            .words
            .get(r.widx)
            .ok_or_else(|| align(format!("sentence has only {} scored words", score.words.len())))?;
        if word.surface != r.word {
            return Err(align(format!(
                "reading-time word {:?} does not match scored word {:?}",
                r.word, word.surface
            )));
        }
        let surp_at = |back: usize| {
            r.widx
                .checked_sub(back)
                .map(|i| score.words[i].surprisal(opts.variant))
        };
        let freq_at = |back: usize| -> Result<Option<T>> {
            match r.widx.checked_sub(back) {
                None => Ok(None),
                Some(i) => freqs
                    .get(&r.sid, i)
                    .map(|f| Some(conv(f)))
                    .ok_or_else(|| align(format!("no frequency for word {i}"))),
            }
        };
        let rt = conv(r.rt);
        let response = match opts.transform {
            Transform::Identity => rt,
            Transform::Log => {
                if r.rt <= 0.0 {
                    return Err(align(format!("cannot log-transform rt {}", r.rt)));
                }
                rt.ln()
            }
        };
        let missing = |x: Option<T>| if x.is_some() { T::zero() } else { T::one() };
        let (s1, s2) = (surp_at(1), surp_at(2));
        out.push(RegressionRow {
            response,
            rt,
            surp: word.surprisal(opts.variant),
            surp_prev1: s1.unwrap_or(opts.impute),
            surp_prev2: s2.unwrap_or(opts.impute),
            freq: conv(r.logfreq),
            freq_prev1: freq_at(1)?.unwrap_or(opts.impute),
            freq_prev2: freq_at(2)?.unwrap_or(opts.impute),
            length: T::from_usize_lossy(r.length),
            index: T::from_usize_lossy(r.widx),
            prev1_missing: missing(s1),
            prev2_missing: missing(s2),
            slength: r.slength.map(conv),
            pfix: r.pfix.map(conv),
            subject: r.subject.clone(),
            item: r.item.clone(),
            sid: r.sid.clone(),
            widx: r.widx,
            condition: r.condition.clone(),
            region: r.region.clone(),
        });
    }
    out.sort_by(|a, b| (&a.sid, a.widx, &a.subject).cmp(&(&b.sid, b.widx, &b.subject)));
    Ok(out)
}

/// Sentence scores keyed by sentence id.
pub fn index_scores<T>(scores: impl IntoIterator<Item = (String, SentenceScore<T>)>) -> HashMap<String, SentenceScore<T>> {
    scores.into_iter().collect()
}

/// Sums squared errors per group label, ordered by label.
pub fn aggregate_by<T: Scalar>(labels: &[String], values: &[T]) -> BTreeMap<String, T> {
    let mut out: BTreeMap<String, T> = BTreeMap::new();
    for (l, &v) in labels.iter().zip(values) {
        let e = out.entry(l.clone()).or_insert(T::zero());
        *e = *e + v;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoding::ScoredWord;
    use crate::vocab::WordSpan;

    fn rec_line(bm: &str) -> String {
        format!(
            r#"{{"sid":"s1","tokens":[{{"t":"▁a","lp":-0.5,"b":true}},{{"t":"x","lp":-1.0,"b":false}}],"bm":{bm}}}"#
        )
    }

    #[test]
    fn parses_well_formed_record() {
        let recs = parse_records(rec_line("[-0.1,-2.0,-0.3]").as_bytes()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].bm.len(), 3);
    }

    #[test]
    fn rejects_short_boundary_array() {
        let text = format!("{}\n{}\n", rec_line("[-0.1,-2.0,-0.3]"), rec_line("[-0.1,-2.0]"));
        match parse_records(text.as_bytes()) {
            Err(Error::Record { line, field, reason }) => {
                assert_eq!(line, 2);
                assert_eq!(field, "bm");
                assert!(reason.contains("b_mass_logps"));
            }
            other => panic!("expected record error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_invalid_values() {
        for bm in ["[0.5,-2.0,-0.3]", "[-0.6,-2.0,-0.3]"] {
            assert!(parse_records(rec_line(bm).as_bytes()).is_err(), "{bm}");
        }
        let missing = r#"{"sid":"s1","tokens":[{"t":"▁a","lp":-0.5,"b":true}]}"#;
        match parse_records(missing.as_bytes()) {
            Err(Error::Record { reason, .. }) => assert!(reason.contains("bm")),
            other => panic!("{other:?}"),
        }
        let positive = r#"{"sid":"s1","tokens":[{"t":"▁a","lp":0.5,"b":true}],"bm":[0.0,-1.0]}"#;
        assert!(parse_records(positive.as_bytes()).is_err());
    }

    #[test]
    fn records_roundtrip() {
        let recs = parse_records(rec_line("[-0.1,-2.0,-0.3]").as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_records(&mut buf, &recs).unwrap();
        assert_eq!(parse_records(buf.as_slice()).unwrap(), recs);
    }

    fn row(sid: &str, widx: usize, rt: f64) -> RtRow {
        RtRow {
            subject: "s1".into(),
            item: "i1".into(),
            sid: sid.into(),
            widx,
            word: format!("w{widx}"),
            rt,
            length: 2,
            logfreq: 1.0 + widx as f64,
            condition: None,
            region: None,
            slength: None,
            pfix: None,
            drop: None,
            nwords: None,
        }
    }

    #[test]
    fn spr_filter_examples() {
        let rows: Vec<_> = vec![
            row("a", 0, 300.0),
            row("a", 1, 50.0),
            row("a", 2, 3000.0),
            row("a", 3, 100.0),
            row("a", 4, 3000.5),
            row("a", 5, 400.0),
        ];
        let kept = filter_rt(&rows, RtKind::Spr);
        let idx: Vec<_> = kept.iter().map(|r| r.widx).collect();
        assert_eq!(idx, vec![2, 3]);
        assert_eq!(filter_rt(&kept, RtKind::Spr), kept);
    }

    #[test]
    fn gpd_filter_examples() {
        let mut rows: Vec<_> = (0..5).map(|i| row("a", i, 200.0)).collect();
        rows[1].rt = 0.0;
        rows[2].drop = Some(1);
        let kept = filter_rt(&rows, RtKind::Gpd);
        assert_eq!(kept.iter().map(|r| r.widx).collect::<Vec<_>>(), vec![3]);
        assert_eq!(filter_rt(&kept, RtKind::Gpd), kept);
    }

    #[test]
    fn rt_csv_roundtrip_and_errors() {
        let text = "subject,item,sid,widx,word,rt,length,logfreq\ns1,i1,a,0,The,310.5,3,8.1\ns1,i1,a,1,cat,280,3,6.0\n";
        let rows = parse_rt(text.as_bytes()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].nwords, Some(2));
        assert_eq!(rows[0].condition, None);
        let mut buf = Vec::new();
        write_rt(&mut buf, &rows).unwrap();
        assert_eq!(parse_rt(buf.as_slice()).unwrap(), rows);

        assert!(matches!(
            parse_rt("subject,item,sid,widx,word,rt,length,logfreq\n".as_bytes()),
            Err(Error::ReadingTimes(_))
        ));
        let neg = "subject,item,sid,widx,word,rt,length,logfreq\ns1,i1,a,0,The,-3,3,8.1\n";
        assert!(parse_rt(neg.as_bytes()).is_err());
        let with_cond =
            "subject,item,sid,widx,word,rt,length,logfreq,condition,region\ns1,i1,a,0,\"x,y\",300,3,1,amb,critical\n";
        let rows = parse_rt(with_cond.as_bytes()).unwrap();
        assert_eq!(rows[0].word, "x,y");
        assert_eq!(rows[0].region.as_deref(), Some("critical"));
    }

    fn scored(sid_words: &[(&str, f64, f64)]) -> SentenceScore<f64> {
        let words = sid_words
            .iter()
            .enumerate()
            .map(|(i, (w, wl, wt))| ScoredWord {
                surface: (*w).into(),
                span: WordSpan::new(i, i + 1),
                wl_logprob: -wl * std::f64::consts::LN_2,
                wt_logprob: -wt * std::f64::consts::LN_2,
                wl_surprisal: *wl,
                wt_surprisal: *wt,
            })
            .collect();
        SentenceScore {
            words,
            initial_b_logmass: 0.0,
            final_b_logmass: 0.0,
        }
    }

    #[test]
    fn spillover_shift_and_imputation() {
        let scores = index_scores([("a".to_string(), scored(&[("w0", 2.0, 1.0), ("w1", 5.0, 4.0), ("w2", 3.0, 3.5)]))]);
        let rts: Vec<_> = (0..3).map(|i| row("a", i, 300.0)).collect();
        let freqs = FreqTable::from_rows(&rts);
        let rows = build_rows(&scores, &rts, &freqs, RowOptions::new(Variant::Wl, Transform::Identity)).unwrap();
        let last = &rows[2];
        assert_eq!((last.surp, last.surp_prev1, last.surp_prev2), (3.0, 5.0, 2.0));
        assert_eq!((last.freq_prev1, last.freq_prev2), (2.0, 1.0));
        let first = &rows[0];
        assert_eq!((first.surp_prev1, first.surp_prev2), (0.0, 0.0));
        assert_eq!((first.prev1_missing, first.prev2_missing), (1.0, 1.0));
        assert_eq!((rows[1].prev1_missing, rows[1].prev2_missing), (0.0, 1.0));

        let wt = build_rows(&scores, &rts, &freqs, RowOptions::new(Variant::Wt, Transform::Log)).unwrap();
        for (a, b) in rows.iter().zip(&wt) {
            assert_eq!(a.freq, b.freq);
            assert_eq!(a.length, b.length);
            assert_eq!(b.response, 300f64.ln());
        }
        assert_eq!(wt[2].surp, 3.5);
    }

    #[test]
    fn alignment_errors() {
        let scores = index_scores([("a".to_string(), scored(&[("w0", 2.0, 1.0)]))]);
        let freqs = FreqTable::default();
        let opts = RowOptions::new(Variant::Wl, Transform::Identity);
        for bad in [row("b", 0, 300.0), row("a", 3, 300.0), {
            let mut r = row("a", 0, 300.0);
            r.word = "other".into();
            r
        }] {
            assert!(matches!(
                build_rows(&scores, &[bad], &freqs, opts),
                Err(Error::Alignment { .. })
            ));
        }
    }

    #[test]
    fn frequency_helper() {
        let counts = parse_unigram_counts("the\t3\ncat\t1\n").unwrap();
        let lf = log_freq_per_million(&counts);
        assert!((lf["the"] - (4.0e6f64 / 4.0).ln()).abs() < 1e-12);
        assert!((lf["cat"] - (2.0e6f64 / 4.0).ln()).abs() < 1e-12);
    }
}
