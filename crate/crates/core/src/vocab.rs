//! Subword vocabularies with the word-initial / word-internal partition,
//! greedy tokenization for toy vocabularies, and word segmentation.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a token in its [`Vocabulary`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TokenId(pub u32);

impl TokenId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for TokenId {
    fn from(i: usize) -> Self {
        TokenId(u32::try_from(i).expect("token index fits in u32"))
    }
}

/// `B` tokens open a whitespace-delimited word; `I` tokens continue one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenClass {
    #[serde(rename = "B")]
    Begin,
    #[serde(rename = "I")]
    Inside,
}

impl TokenClass {
    pub fn is_begin(self) -> bool {
        self == TokenClass::Begin
    }

    fn as_str(self) -> &'static str {
        match self {
            TokenClass::Begin => "B",
            TokenClass::Inside => "I",
        }
    }
}

impl fmt::Display for TokenClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A subword vocabulary partitioned into `V_B` and `V_I`.
///
/// A token is class `B` exactly when its surface starts with the whitespace
/// marker. Surfaces are unique and non-empty, the marker may only appear as
/// the first character of a surface, and `V_B` is never empty.
#[derive(Clone, Debug)]
pub struct Vocabulary {
    marker: char,
    surfaces: Vec<String>,
    classes: Vec<TokenClass>,
    index: HashMap<String, TokenId>,
    begin: Vec<TokenId>,
    inside: Vec<TokenId>,
    max_chars: usize,
}

impl Vocabulary {
    pub const DEFAULT_MARKER: char = '▁';

    /// Builds a vocabulary, deriving each token's class from the marker.
    pub fn new<I, S>(marker: char, surfaces: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let entries = surfaces
            .into_iter()
            .map(|s| {
                let s = s.into();
                let class = if s.starts_with(marker) {
                    TokenClass::Begin
                } else {
                    TokenClass::Inside
                };
                (s, class)
            })
            .collect();
        Self::with_classes(marker, entries)
    }

    /// Builds a vocabulary from explicit classes, rejecting any class that
    /// disagrees with the marker convention.
    pub fn with_classes(marker: char, entries: Vec<(String, TokenClass)>) -> Result<Self> {
        if marker.is_whitespace() && marker != ' ' {
            return Err(Error::Vocabulary(format!("unusable marker {marker:?}")));
        }
        let mut index = HashMap::with_capacity(entries.len());
        let mut surfaces = Vec::with_capacity(entries.len());
        let mut classes = Vec::with_capacity(entries.len());
        let (mut begin, mut inside) = (Vec::new(), Vec::new());
        let mut max_chars = 0;
        for (i, (surface, class)) in entries.into_iter().enumerate() {
            if surface.is_empty() {
                return Err(Error::Vocabulary(format!("entry {i} has an empty surface")));
            }
            let starts = surface.starts_with(marker);
            if starts != class.is_begin() {
                return Err(Error::Vocabulary(format!(
                    "{surface:?} is declared {class} but the marker says otherwise"
                )));
            }
            if surface.chars().skip(1).any(|c| c == marker) {
                return Err(Error::Vocabulary(format!(
                    "{surface:?} contains the marker after its first character"
                )));
            }
            let id = TokenId::from(i);
            if index.insert(surface.clone(), id).is_some() {
                return Err(Error::Vocabulary(format!("duplicate surface {surface:?}")));
            }
            match class {
                TokenClass::Begin => begin.push(id),
                TokenClass::Inside => inside.push(id),
            }
            max_chars = max_chars.max(surface.chars().count());
            surfaces.push(surface);
            classes.push(class);
        }
        if begin.is_empty() {
            return Err(Error::Vocabulary("no word-initial (B) tokens".into()));
        }
        Ok(Vocabulary {
            marker,
            surfaces,
            classes,
            index,
            begin,
            inside,
            max_chars,
        })
    }

    /// Parses the line format `<surface>\t<B|I>` with an optional
    /// `#marker=<c>` header on the first line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().peekable();
        let mut marker = Self::DEFAULT_MARKER;
        if let Some((_, first)) = lines.peek() {
            if let Some(m) = first.strip_prefix("#marker=") {
                let mut cs = m.chars();
                marker = match (cs.next(), cs.next()) {
                    (Some(c), None) => c,
                    _ => {
                        return Err(Error::Vocabulary(format!(
                            "line 1: marker must be a single character, got {m:?}"
                        )))
                    }
                };
                lines.next();
            }
        }
        let mut entries = Vec::new();
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let (surface, class) = line.rsplit_once('\t').ok_or_else(|| {
                Error::Vocabulary(format!("line {}: expected <surface>\\t<B|I>", i + 1))
            })?;
            let class = match class {
                "B" => TokenClass::Begin,
                "I" => TokenClass::Inside,
                other => {
                    return Err(Error::Vocabulary(format!(
                        "line {}: unknown class {other:?}",
                        i + 1
                    )))
                }
            };
            entries.push((surface.to_owned(), class));
        }
        Self::with_classes(marker, entries)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Serializes to the format read by [`Vocabulary::parse`].
    pub fn to_file_string(&self) -> String {
        let mut out = format!("#marker={}\n", self.marker);
        for (s, c) in self.surfaces.iter().zip(&self.classes) {
            out.push_str(s);
            out.push('\t');
            out.push_str(c.as_str());
            out.push('\n');
        }
        out
    }

    pub fn marker(&self) -> char {
        self.marker
    }

    pub fn len(&self) -> usize {
        self.surfaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfaces.is_empty()
    }

    pub fn classify(&self, surface: &str) -> Result<TokenClass> {
        self.id(surface).map(|id| self.class(id))
    }

    pub fn id(&self, surface: &str) -> Result<TokenId> {
        self.index
            .get(surface)
            .copied()
            .ok_or_else(|| Error::UnknownToken(surface.to_owned()))
    }

    /// Class of an id known to be in range.
    pub fn class(&self, id: TokenId) -> TokenClass {
        self.classes[id.index()]
    }

    pub fn surface(&self, id: TokenId) -> &str {
        &self.surfaces[id.index()]
    }

    pub fn check(&self, id: TokenId) -> Result<()> {
        if id.index() < self.len() {
            Ok(())
        } else {
            Err(Error::OutOfVocabulary(id.index()))
        }
    }

    /// Token ids of `V_B`, ascending.
    pub fn begin_ids(&self) -> &[TokenId] {
        &self.begin
    }

    /// Token ids of `V_I`, ascending.
    pub fn inside_ids(&self) -> &[TokenId] {
        &self.inside
    }

    pub fn ids(&self) -> impl Iterator<Item = TokenId> {
        (0..self.len()).map(TokenId::from)
    }

    pub fn classes_of(&self, tokens: &[TokenId]) -> Result<Vec<TokenClass>> {
        tokens
            .iter()
            .map(|&t| self.check(t).map(|_| self.class(t)))
            .collect()
    }

    /// Parses a space-separated list of surfaces into ids.
    pub fn ids_of(&self, surfaces: &str) -> Result<Vec<TokenId>> {
        surfaces.split_whitespace().map(|s| self.id(s)).collect()
    }

    /// Renders a token sequence as the surface of one word: the leading
    /// marker is dropped and the remaining surfaces are concatenated.
    pub fn word_surface(&self, tokens: &[TokenId]) -> String {
        let joined: String = tokens.iter().map(|&t| self.surface(t)).collect();
        match joined.strip_prefix(self.marker) {
            Some(rest) => rest.to_owned(),
            None => joined,
        }
    }
}

/// Half-open token range `[start, end)` covering one word.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordSpan {
    pub start: usize,
    pub end: usize,
}

impl WordSpan {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start < end);
        WordSpan { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }
}

/// Splits a classified token sequence into words: a word starts at
/// position 0 and at every `B` token.
///
/// Position 0 opens a word even when it is an `I` token, as with
/// sequence-initial tokens that carry no leading whitespace.
pub fn segment_words(classes: &[TokenClass]) -> Vec<WordSpan> {
    let mut spans = Vec::new();
    let mut start = 0;
    for (i, c) in classes.iter().enumerate().skip(1) {
        if c.is_begin() {
            spans.push(WordSpan::new(start, i));
            start = i;
        }
    }
    if !classes.is_empty() {
        spans.push(WordSpan::new(start, classes.len()));
    }
    spans
}

/// A token sequence together with the word spans that tile it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segmentation {
    tokens: Vec<TokenId>,
    spans: Vec<WordSpan>,
}

impl Segmentation {
    pub fn from_tokens(tokens: Vec<TokenId>, vocab: &Vocabulary) -> Result<Self> {
        let classes = vocab.classes_of(&tokens)?;
        let spans = segment_words(&classes);
        Ok(Segmentation { tokens, spans })
    }

    /// Convenience for tests and fixtures: space-separated surfaces.
    pub fn from_surfaces(surfaces: &str, vocab: &Vocabulary) -> Result<Self> {
        Self::from_tokens(vocab.ids_of(surfaces)?, vocab)
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn spans(&self) -> &[WordSpan] {
        &self.spans
    }

    pub fn word_tokens(&self, span: WordSpan) -> &[TokenId] {
        &self.tokens[span.range()]
    }

    pub fn words(&self, vocab: &Vocabulary) -> Vec<String> {
        self.spans
            .iter()
            .map(|s| vocab.word_surface(self.word_tokens(*s)))
            .collect()
    }

    /// Concatenates surfaces and maps the marker back to a space.
    pub fn detokenize(&self, vocab: &Vocabulary) -> String {
        self.tokens
            .iter()
            .map(|&t| vocab.surface(t))
            .collect::<String>()
            .replace(vocab.marker(), " ")
    }
}

/// Leftmost-longest tokenization after mapping each space to the marker.
///
/// Errors carry the byte offset in `text` of the first character no
/// vocabulary entry can cover.
pub fn tokenize_greedy(text: &str, vocab: &Vocabulary) -> Result<Segmentation> {
    let chars: Vec<(usize, char)> = text
        .char_indices()
        .map(|(o, c)| (o, if c == ' ' { vocab.marker() } else { c }))
        .collect();
    let mut tokens = Vec::new();
    let mut pos = 0;
    let mut buf = String::new();
    while pos < chars.len() {
        let longest = vocab.max_chars.min(chars.len() - pos);
        let matched = (1..=longest).rev().find_map(|len| {
            buf.clear();
            buf.extend(chars[pos..pos + len].iter().map(|&(_, c)| c));
            vocab.index.get(buf.as_str()).map(|&id| (id, len))
        });
        match matched {
            Some((id, len)) => {
                tokens.push(id);
                pos += len;
            }
            None => {
                let offset = chars[pos].0;
                return Err(Error::Tokenize {
                    offset,
                    rest: text[offset..].to_owned(),
                });
            }
        }
    }
    Segmentation::from_tokens(tokens, vocab)
}
