//! Shared domain types, tokenization and sentence segmentation.
//!
//! All offsets in this crate are Unicode scalar-value (char) indices into the
//! text they describe, never byte offsets. [`CharIndex`] converts between the
//! two when slicing.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Edit intent of a token, span or edit.
///
/// `None` only ever appears as a token label; spans and edits always carry one
/// of the four edit intents. The declaration order is the fixed tie-breaking
/// order used wherever labels compete.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Intent {
    Clarity,
    Coherence,
    Fluency,
    Style,
    None,
}

impl Intent {
    /// All five classes, in tie-breaking order.
    pub const ALL: [Intent; 5] = [
        Intent::Clarity,
        Intent::Coherence,
        Intent::Fluency,
        Intent::Style,
        Intent::None,
    ];

    /// The four intents that may be attached to a span or an edit.
    pub const EDIT_INTENTS: [Intent; 4] = [
        Intent::Clarity,
        Intent::Coherence,
        Intent::Fluency,
        Intent::Style,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Intent::Clarity => "clarity",
            Intent::Coherence => "coherence",
            Intent::Fluency => "fluency",
            Intent::Style => "style",
            Intent::None => "none",
        }
    }

    pub fn is_edit(self) -> bool {
        self != Intent::None
    }

    /// Picks the highest-scoring class; ties go to the earlier class in
    /// [`Intent::ALL`] order. `scores` is indexed in that same order.
    pub fn argmax(scores: &[f64; 5]) -> Intent {
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate().skip(1) {
            if s > scores[best] {
                best = i;
            }
        }
        Intent::ALL[best]
    }
}

impl fmt::Display for Intent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownIntent(pub String);

impl fmt::Display for UnknownIntent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown intent label {:?}", self.0)
    }
}

impl std::error::Error for UnknownIntent {}

impl FromStr for Intent {
    type Err = UnknownIntent;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "clarity" => Ok(Intent::Clarity),
            "coherence" => Ok(Intent::Coherence),
            "fluency" => Ok(Intent::Fluency),
            "style" => Ok(Intent::Style),
            "none" | "o" => Ok(Intent::None),
            _ => Err(UnknownIntent(s.to_string())),
        }
    }
}

/// A token with char offsets into its source text (`end` exclusive).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// A sentence as a char range of its document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub index: usize,
    pub start: usize,
    pub end: usize,
}

/// A document at some revision depth; depth 0 is the original input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    #[serde(default)]
    pub depth: usize,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            doc_id: doc_id.into(),
            text: text.into(),
            depth: 0,
        }
    }
}

/// How much surrounding text the detector sees for each sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContextMode {
    #[default]
    SingleSentence,
    /// The preceding and following sentences are supplied as context.
    MultiSentence,
}

/// How detected intents are conveyed to the reviser.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnnotationMode {
    /// Intent tags wrapped around each editable span.
    #[default]
    SpanTags,
    /// A single intent tag prepended to each flagged sentence.
    SentencePrefix,
}

/// Scorer used by the optional quality-decrease stopping criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QualityMetric {
    Sari,
    Bleu,
    RougeL,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub max_depth: usize,
    pub context_mode: ContextMode,
    pub annotation_mode: AnnotationMode,
    /// Stop when this metric (against supplied references) drops between depths.
    pub quality_guard: Option<QualityMetric>,
    /// Skip sentences whose detector reports `needs_edit == false`.
    pub gate_on_needs_edit: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            max_depth: 4,
            context_mode: ContextMode::SingleSentence,
            annotation_mode: AnnotationMode::SpanTags,
            quality_guard: None,
            gate_on_needs_edit: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvalidConfig(pub &'static str);

impl fmt::Display for InvalidConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid engine configuration: {}", self.0)
    }
}

impl std::error::Error for InvalidConfig {}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), InvalidConfig> {
        if self.max_depth == 0 {
            return Err(InvalidConfig("max_depth must be at least 1"));
        }
        Ok(())
    }
}

/// Char-offset to byte-offset table for one text.
#[derive(Debug, Clone)]
pub struct CharIndex {
    offsets: Vec<usize>,
}

impl CharIndex {
    pub fn new(text: &str) -> Self {
        let mut offsets: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
        offsets.push(text.len());
        CharIndex { offsets }
    }

    /// Number of chars in the indexed text.
    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Byte offset of char position `idx` (`idx == len()` is allowed).
    pub fn byte(&self, idx: usize) -> usize {
        self.offsets[idx]
    }

    /// Char position of byte offset `byte`, which must sit on a char boundary.
    pub fn char_at_byte(&self, byte: usize) -> usize {
        self.offsets
            .binary_search(&byte)
            .expect("byte offset is not on a char boundary")
    }

    pub fn slice<'a>(&self, text: &'a str, start: usize, end: usize) -> &'a str {
        &text[self.offsets[start]..self.offsets[end]]
    }
}

/// Number of chars in `s`.
pub fn char_len(s: &str) -> usize {
    s.chars().count()
}

fn is_punct(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

/// Splits on whitespace, then peels leading and trailing punctuation off each
/// chunk one character at a time. Punctuation inside a chunk (apostrophes,
/// hyphens, decimal points) stays attached.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let mut tokens = Vec::new();
    let push = |start: usize, end: usize, tokens: &mut Vec<Token>| {
        tokens.push(Token {
            text: chars[start..end].iter().collect(),
            start,
            end,
        });
    };

    let mut i = 0;
    while i < n {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && !chars[i].is_whitespace() {
            i += 1;
        }
        let (mut lo, hi) = (start, i);
        while lo < hi && is_punct(chars[lo]) {
            push(lo, lo + 1, &mut tokens);
            lo += 1;
        }
        let mut trailing = hi;
        while trailing > lo && is_punct(chars[trailing - 1]) {
            trailing -= 1;
        }
        if lo < trailing {
            push(lo, trailing, &mut tokens);
        }
        while trailing < hi {
            push(trailing, trailing + 1, &mut tokens);
            trailing += 1;
        }
    }
    tokens
}

const TERMINATORS: [char; 3] = ['.', '!', '?'];
const CLOSERS: [char; 7] = ['"', '\'', ')', ']', '}', '\u{201D}', '\u{2019}'];
const OPENERS: [char; 6] = ['"', '\'', '(', '[', '\u{201C}', '\u{2018}'];

/// Lower-cased words (without their final period) that do not end a sentence.
const ABBREVIATIONS: &[&str] = &[
    "e.g", "i.e", "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "cf", "fig", "al",
    "approx", "etc", "inc", "ltd", "vol", "eq", "no", "resp",
];

fn ends_with_abbreviation(chars: &[char], seg_start: usize, period: usize) -> bool {
    let mut word_start = period;
    while word_start > seg_start && !chars[word_start - 1].is_whitespace() {
        word_start -= 1;
    }
    while word_start < period && OPENERS.contains(&chars[word_start]) {
        word_start += 1;
    }
    let word: String = chars[word_start..period]
        .iter()
        .flat_map(|c| c.to_lowercase())
        .collect();
    ABBREVIATIONS.contains(&word.as_str())
}

/// Rule-based sentence segmentation.
///
/// A boundary is a run of `.`/`!`/`?` (plus any closing quotes or brackets)
/// followed by whitespace and then an uppercase letter or an opening quote.
/// A period ending a stop-listed abbreviation never splits. Sentences are
/// trimmed of surrounding whitespace, so together they cover exactly the
/// non-whitespace content of `text`.
pub fn split_sentences(text: &str) -> Vec<Sentence> {
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let mut sentences = Vec::new();
    let mut seg_start: Option<usize> = None;

    let mut i = 0;
    while i < n {
        let c = chars[i];
        if seg_start.is_none() {
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            seg_start = Some(i);
        }
        if !TERMINATORS.contains(&c) {
            i += 1;
            continue;
        }
        let start = seg_start.unwrap_or(i);
        let mut j = i + 1;
        while j < n && TERMINATORS.contains(&chars[j]) {
            j += 1;
        }
        while j < n && CLOSERS.contains(&chars[j]) {
            j += 1;
        }
        if j < n && chars[j].is_whitespace() {
            let mut k = j;
            while k < n && chars[k].is_whitespace() {
                k += 1;
            }
            let next_opens = k < n && (chars[k].is_uppercase() || OPENERS.contains(&chars[k]));
            let abbreviated = c == '.' && j == i + 1 && ends_with_abbreviation(&chars, start, i);
            if next_opens && !abbreviated {
                sentences.push(Sentence {
                    index: sentences.len(),
                    start,
                    end: j,
                });
                seg_start = None;
                i = k;
                continue;
            }
        }
        i = j;
    }

    if let Some(start) = seg_start {
        let mut end = n;
        while end > start && chars[end - 1].is_whitespace() {
            end -= 1;
        }
        sentences.push(Sentence {
            index: sentences.len(),
            start,
            end,
        });
    }
    sentences
}
