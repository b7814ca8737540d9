//! Seeded generators: random vocabularies, tables and sentences for property
//! tests, and a small garden-path corpus with simulated reading times.
//!
//! The garden-path corpus is built so that in the ambiguous condition the
//! critical verb follows a boundary the model rarely sees ("the N2" is
//! usually closed by a comma or period), which is where WL and WT disagree.

use std::collections::{BTreeMap, HashMap};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, Normal};
use serde::Serialize;

use crate::decoding::{export_record, score_sentence, SentenceScore};
use crate::error::{Error, Result};
use crate::ingest::{LogprobRecord, RtRow};
use crate::probsource::{NGramModel, TabularModel};
use crate::vocab::{Segmentation, TokenClass, TokenId, Vocabulary};

/// Vocabulary `▁b0 … ▁b{n_begin−1}`, `i0 … i{n_inside−1}`.
pub fn random_vocab(n_begin: usize, n_inside: usize) -> Vocabulary {
    let begin = (0..n_begin).map(|i| format!("▁b{i}"));
    let inside = (0..n_inside).map(|i| format!("i{i}"));
    Vocabulary::new(Vocabulary::DEFAULT_MARKER, begin.chain(inside)).expect("generated vocabulary")
}

fn random_dist(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| Distribution::<f64>::sample(&Exp1, rng) + 1e-3).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// Table of order `order` with a random, strictly positive distribution for
/// every context of length `0..=order` and a random default.
pub fn random_tabular(vocab: &Vocabulary, order: usize, rng: &mut impl Rng) -> TabularModel<f64> {
    let v = vocab.len();
    let default = random_dist(rng, v);
    let mut model = TabularModel::new(vocab.clone(), order, &default).expect("normalized default");
    let mut level: Vec<Vec<TokenId>> = vec![Vec::new()];
    for len in 0..=order {
        for ctx in &level {
            model
                .insert(ctx.clone(), &random_dist(rng, v))
                .expect("normalized row");
        }
        if len < order {
            level = level
                .iter()
                .flat_map(|ctx| {
                    vocab.ids().map(move |t| {
                        let mut c = ctx.clone();
                        c.push(t);
                        c
                    })
                })
                .collect();
        }
    }
    model
}

/// Random sentence of `n_words` words, each one begin token followed by up
/// to `max_inside` inside tokens.
pub fn random_sentence(vocab: &Vocabulary, n_words: usize, max_inside: usize, rng: &mut impl Rng) -> Vec<TokenId> {
    let (b, i) = (vocab.begin_ids(), vocab.inside_ids());
    let mut out = Vec::new();
    for _ in 0..n_words {
        out.push(b[rng.random_range(0..b.len())]);
        if !i.is_empty() {
            for _ in 0..rng.random_range(0..=max_inside) {
                out.push(i[rng.random_range(0..i.len())]);
            }
        }
    }
    out
}

const SUBJECT_NOUNS: &[&str] = &["doc+tor", "teach+er", "pil+ot", "soldier", "nurse", "artist", "banker", "farmer"];
const AMBIGUOUS_VERBS: &[&str] = &["visited", "watched", "called", "painted", "cleaned", "followed", "helped", "studied"];
const OBJECT_NOUNS: &[&str] = &["room", "house", "car", "garden", "child", "dog", "boat", "story"];
const INTRANSITIVE_VERBS: &[&str] = &["ran", "fell", "stopped", "shook", "moved", "broke", "burned", "opened"];
const ADVERBS: &[&str] = &["fast", "loud", "slow", "hard", "far", "well"];

/// Word-index labels of the garden-path regions.
pub const CRITICAL_WIDX: usize = 6;
pub const REGIONS: [(usize, &str); 3] = [(6, "critical"), (7, "spillover1"), (8, "spillover2")];
pub const AMBIGUOUS: &str = "ambiguous";
pub const UNAMBIGUOUS: &str = "unambiguous";

/// Linear reader used to simulate reading times in milliseconds.
#[derive(Clone, Debug, Serialize)]
pub struct Reader {
    pub intercept: f64,
    pub surp: f64,
    pub surp_prev1: f64,
    pub surp_prev2: f64,
    pub length: f64,
    pub freq: f64,
    pub subject_sd: f64,
    pub noise_sd: f64,
}

impl Default for Reader {
    fn default() -> Self {
        Reader {
            intercept: 260.0,
            surp: 6.0,
            surp_prev1: 6.0,
            surp_prev2: 3.0,
            length: 2.0,
            freq: -3.0,
            subject_sd: 25.0,
            noise_sd: 20.0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GardenConfig {
    pub seed: u64,
    pub train_sentences: usize,
    pub order: usize,
    pub alpha: f64,
    pub fillers: usize,
    pub items: usize,
    pub subjects: usize,
    /// Sentences in each log-RT set used to compare WL and WT fits.
    pub nrt_sentences: usize,
    pub nrt_slope: f64,
    pub nrt_noise_sd: f64,
    pub reader: Reader,
}

impl Default for GardenConfig {
    fn default() -> Self {
        GardenConfig {
            seed: 20240601,
            train_sentences: 20_000,
            order: 4,
            alpha: 0.01,
            fillers: 80,
            items: 24,
            subjects: 8,
            nrt_sentences: 240,
            nrt_slope: 0.05,
            nrt_noise_sd: 0.1,
            reader: Reader::default(),
        }
    }
}

/// Which surprisal the simulated log reading times depend on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Generator {
    Wl,
    Wt,
}

/// Generated corpus: training text, scored sentences and reading times.
#[derive(Clone, Debug)]
pub struct GardenCorpus {
    pub config: GardenConfig,
    pub vocab: Vocabulary,
    pub model: NGramModel<f64>,
    pub training: Vec<Vec<TokenId>>,
    /// Sentence id to tokens for every sentence with reading times.
    pub sentences: BTreeMap<String, Vec<TokenId>>,
    pub fillers: Vec<RtRow>,
    pub garden_path: Vec<RtRow>,
    /// Log reading times driven by WL surprisal.
    pub nrt_wl: Vec<RtRow>,
    /// Log reading times driven by WT surprisal.
    pub nrt_wt: Vec<RtRow>,
}

fn pieces(word: &str) -> Vec<String> {
    if word == "," || word == "." {
        return vec![word.to_owned()];
    }
    word.split('+')
        .enumerate()
        .map(|(i, p)| if i == 0 { format!("▁{p}") } else { p.to_owned() })
        .collect()
}

fn garden_vocab() -> Vocabulary {
    let mut surfaces: Vec<String> = Vec::new();
    let lexicon = ["after", "the", "very", "again"]
        .iter()
        .chain(SUBJECT_NOUNS)
        .chain(AMBIGUOUS_VERBS)
        .chain(OBJECT_NOUNS)
        .chain(INTRANSITIVE_VERBS)
        .chain(ADVERBS)
        .chain([",", "."].iter());
    for w in lexicon {
        for p in pieces(w) {
            if !surfaces.contains(&p) {
                surfaces.push(p);
            }
        }
    }
    Vocabulary::new(Vocabulary::DEFAULT_MARKER, surfaces).expect("garden vocabulary")
}

struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    /// Zipf-weighted pick so lexical items differ in frequency.
    fn pick(&mut self, words: &[&'static str]) -> &'static str {
        let weights: Vec<f64> = (0..words.len()).map(|k| 1.0 / (k as f64 + 1.0)).collect();
        let dist = WeightedIndex::new(&weights).expect("positive weights");
        words[dist.sample(&mut self.rng)]
    }

    fn uniform(&mut self, words: &[&'static str]) -> &'static str {
        words[self.rng.random_range(0..words.len())]
    }

    /// One training or filler sentence; garden-path continuations only when
    /// `allow_garden_path`.
    fn sentence(&mut self, allow_garden_path: bool) -> Vec<&'static str> {
        let n1 = self.pick(SUBJECT_NOUNS);
        let v1 = self.pick(AMBIGUOUS_VERBS);
        let n2 = self.pick(OBJECT_NOUNS);
        let n3 = self.pick(OBJECT_NOUNS);
        let v2 = self.pick(INTRANSITIVE_VERBS);
        let adv = self.pick(ADVERBS);
        let roll: f64 = self.rng.random();
        let gp_share = if allow_garden_path { 0.02 } else { 0.0 };
        if roll < 0.45 {
            vec!["after", "the", n1, v1, "the", n2, ",", "the", n3, v2, "very", adv, "again", "."]
        } else if roll < 0.65 {
            vec!["the", n1, v1, "the", n2, "."]
        } else if roll < 0.73 {
            vec!["after", "the", n1, v1, ",", "the", n2, v2, "very", adv, "again", "."]
        } else if roll < 1.0 - gp_share {
            vec!["the", n2, v2, "very", adv, "again", "."]
        } else {
            vec!["after", "the", n1, v1, "the", n2, v2, "very", adv, "again", "."]
        }
    }
}

fn tokens_of(vocab: &Vocabulary, words: &[&str]) -> Vec<TokenId> {
    words
        .iter()
        .flat_map(|w| pieces(w))
        .map(|p| vocab.id(&p).expect("lexicon token"))
        .collect()
}

fn bare(word: &str) -> String {
    word.chars().filter(|c| c.is_alphabetic()).collect()
}

/// Per-word data a simulated reader needs.
struct WordInfo {
    surface: String,
    length: usize,
    logfreq: f64,
    wl: f64,
    wt: f64,
}

impl GardenCorpus {
    pub fn generate(config: GardenConfig) -> Result<Self> {
        let vocab = garden_vocab();
        let mut s = Sampler {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        };
        let training: Vec<Vec<TokenId>> = (0..config.train_sentences)
            .map(|_| tokens_of(&vocab, &s.sentence(true)))
            .collect();
        let model = NGramModel::train(vocab.clone(), &training, config.order, config.alpha)?;

        let mut counts: HashMap<String, u64> = HashMap::new();
        for sent in &training {
            let seg = Segmentation::from_tokens(sent.clone(), &vocab)?;
            for w in seg.words(&vocab) {
                *counts.entry(bare(&w)).or_default() += 1;
            }
        }
        let total: u64 = counts.values().sum();
        let logfreq = |w: &str| {
            let c = counts.get(&bare(w)).copied().unwrap_or(0);
            ((c as f64 + 1.0) * 1e6 / total as f64).ln()
        };

        let mut sentences = BTreeMap::new();
        let mut info: BTreeMap<String, Vec<WordInfo>> = BTreeMap::new();
        let mut add = |sid: String, words: &[&str]| -> Result<()> {
            let tokens = tokens_of(&vocab, words);
            let seg = Segmentation::from_tokens(tokens.clone(), &vocab)?;
            let score: SentenceScore<f64> = score_sentence(&model, &seg)?;
            let words = score
                .words
                .iter()
                .map(|w| WordInfo {
                    length: bare(&w.surface).chars().count(),
                    logfreq: logfreq(&w.surface),
                    surface: w.surface.clone(),
                    wl: w.wl_surprisal,
                    wt: w.wt_surprisal,
                })
                .collect();
            info.insert(sid.clone(), words);
            sentences.insert(sid, tokens);
            Ok(())
        };

        let filler_ids: Vec<String> = (0..config.fillers).map(|i| format!("f{:03}", i + 1)).collect();
        for sid in &filler_ids {
            add(sid.clone(), &s.sentence(false))?;
        }
        let mut items = Vec::new();
        for i in 0..config.items {
            let (n1, v1, n2, v2, adv) = (
                s.uniform(SUBJECT_NOUNS),
                s.uniform(AMBIGUOUS_VERBS),
                s.uniform(OBJECT_NOUNS),
                s.uniform(INTRANSITIVE_VERBS),
                s.uniform(ADVERBS),
            );
            let item = format!("g{:02}", i + 1);
            let amb = ["after", "the", n1, v1, "the", n2, v2, "very", adv, "again", "."];
            let unamb = ["after", "the", n1, v1, ",", "the", n2, v2, "very", adv, "again", "."];
            add(format!("{item}a"), &amb)?;
            add(format!("{item}u"), &unamb)?;
            items.push(item);
        }
        let nrt_ids: Vec<String> = (0..config.nrt_sentences).map(|i| format!("n{:03}", i + 1)).collect();
        for sid in &nrt_ids {
            add(sid.clone(), &s.sentence(true))?;
        }

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
        let r = &config.reader;
        let noise = Normal::new(0.0, r.noise_sd).map_err(|e| Error::Domain(e.to_string()))?;
        let subj = Normal::new(0.0, r.subject_sd).map_err(|e| Error::Domain(e.to_string()))?;
        let subjects: Vec<(String, f64)> = (0..config.subjects)
            .map(|k| (format!("s{:02}", k + 1), subj.sample(&mut rng)))
            .collect();

        let round = |x: f64| (x * 1000.0).round() / 1000.0;
        // neutral reader: mean of the two surprisals
        let reader_rows = |rng: &mut ChaCha8Rng, subject: &(String, f64), item: &str, sid: &str, condition: Option<&str>| {
            let words = &info[sid];
            let mean = |i: usize| (words[i].wl + words[i].wt) / 2.0;
            let lag = |i: usize, k: usize| i.checked_sub(k).map_or(0.0, &mean);
            (0..words.len())
                .map(|i| {
                    let w = &words[i];
                    let rt = r.intercept
                        + subject.1
                        + r.surp * mean(i)
                        + r.surp_prev1 * lag(i, 1)
                        + r.surp_prev2 * lag(i, 2)
                        + r.length * w.length as f64
                        + r.freq * w.logfreq
                        + noise.sample(rng);
                    RtRow {
                        subject: subject.0.clone(),
                        item: item.to_owned(),
                        sid: sid.to_owned(),
                        widx: i,
                        word: w.surface.clone(),
                        rt: round(rt),
                        length: w.length,
                        logfreq: round(w.logfreq),
                        condition: condition.map(str::to_owned),
                        region: REGIONS.iter().find(|(k, _)| *k == i).map(|(_, l)| (*l).to_owned()).filter(|_| condition.is_some()),
                        slength: None,
                        pfix: None,
                        drop: None,
                        nwords: Some(words.len()),
                    }
                })
                .collect::<Vec<_>>()
        };

        let mut fillers = Vec::new();
        for sid in &filler_ids {
            for subject in &subjects {
                fillers.extend(reader_rows(&mut rng, subject, sid, sid, None));
            }
        }
        let mut garden_path = Vec::new();
        for (i, item) in items.iter().enumerate() {
            for (k, subject) in subjects.iter().enumerate() {
                let (suffix, cond) = if (i + k) % 2 == 0 { ("a", AMBIGUOUS) } else { ("u", UNAMBIGUOUS) };
                let sid = format!("{item}{suffix}");
                garden_path.extend(reader_rows(&mut rng, subject, item, &sid, Some(cond)));
            }
        }

        let lognoise = Normal::new(0.0, config.nrt_noise_sd).map_err(|e| Error::Domain(e.to_string()))?;
        let nrt = |generator: Generator, rng: &mut ChaCha8Rng| {
            let mut rows = Vec::new();
            for sid in &nrt_ids {
                let subject = &subjects[rows.len() % subjects.len()].0;
                for (i, w) in info[sid].iter().enumerate() {
                    let s = match generator {
                        Generator::Wl => w.wl,
                        Generator::Wt => w.wt,
                    };
                    let log_rt = 5.6 + config.nrt_slope * s + 0.02 * w.length as f64 + lognoise.sample(rng);
                    rows.push(RtRow {
                        subject: subject.clone(),
                        item: sid.clone(),
                        sid: sid.clone(),
                        widx: i,
                        word: w.surface.clone(),
                        rt: round(log_rt.exp()),
                        length: w.length,
                        logfreq: round(w.logfreq),
                        condition: None,
                        region: None,
                        slength: None,
                        pfix: None,
                        drop: None,
                        nwords: Some(info[sid].len()),
                    });
                }
            }
            rows
        };
        let nrt_wl = nrt(Generator::Wl, &mut rng);
        let nrt_wt = nrt(Generator::Wt, &mut rng);

        Ok(GardenCorpus {
            config,
            vocab,
            model,
            training,
            sentences,
            fillers,
            garden_path,
            nrt_wl,
            nrt_wt,
        })
    }

    /// Scores of every sentence with reading times.
    pub fn scores(&self) -> Result<HashMap<String, SentenceScore<f64>>> {
        self.sentences
            .iter()
            .map(|(sid, toks)| {
                let seg = Segmentation::from_tokens(toks.clone(), &self.vocab)?;
                Ok((sid.clone(), score_sentence(&self.model, &seg)?))
            })
            .collect()
    }

    pub fn records(&self) -> Result<Vec<LogprobRecord>> {
        self.sentences
            .iter()
            .map(|(sid, toks)| {
                let seg = Segmentation::from_tokens(toks.clone(), &self.vocab)?;
                export_record(&self.model, &seg, sid.clone())
            })
            .collect()
    }

    /// Space-separated token surfaces, one sentence per line.
    pub fn training_text(&self) -> String {
        join_lines(self.training.iter().map(|t| surfaces(&self.vocab, t)))
    }

    /// `sid<TAB>surfaces` lines.
    pub fn sentences_text(&self) -> String {
        join_lines(
            self.sentences
                .iter()
                .map(|(sid, t)| format!("{sid}\t{}", surfaces(&self.vocab, t))),
        )
    }

    /// Token classes at every position of a sentence, for inspection.
    pub fn classes(&self, sid: &str) -> Option<Vec<TokenClass>> {
        self.sentences
            .get(sid)
            .map(|t| t.iter().map(|&id| self.vocab.class(id)).collect())
    }
}

fn surfaces(vocab: &Vocabulary, tokens: &[TokenId]) -> String {
    tokens.iter().map(|&t| vocab.surface(t)).collect::<Vec<_>>().join(" ")
}

fn join_lines(lines: impl Iterator<Item = String>) -> String {
    let mut out = String::new();
    for l in lines {
        out.push_str(&l);
        out.push('\n');
    }
    out
}

/// Parses `sid<TAB>space-separated surfaces` lines in file order; blank
/// lines and `#` comments are skipped.
pub fn parse_sentences(text: &str, vocab: &Vocabulary) -> Result<Vec<(String, Vec<TokenId>)>> {
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (sid, toks) = line.split_once('\t').ok_or_else(|| Error::ModelFile {
            line: i + 1,
            reason: "expected sid<TAB>tokens".into(),
        })?;
        if !seen.insert(sid.to_owned()) {
            return Err(Error::ModelFile {
                line: i + 1,
                reason: format!("duplicate sentence id {sid}"),
            });
        }
        out.push((sid.to_owned(), vocab.ids_of(toks)?));
    }
    Ok(out)
}

/// Parses a training corpus of space-separated token surfaces per line.
pub fn parse_corpus(text: &str, vocab: &Vocabulary) -> Result<Vec<Vec<TokenId>>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| vocab.ids_of(l.trim()))
        .collect()
}
