//! The intent-tagged text format handed to revisers.
//!
//! Grammar: lowercase `<clarity>`, `<coherence>`, `<fluency>` and `<style>`
//! tags with matching closers, no attributes, no nesting. Literal `&`, `<` and
//! `>` in the plain text are written as `&amp;`, `&lt;` and `&gt;`. One space
//! after an opening tag and one before a closing tag is padding and does not
//! belong to the span; [`render_annotated`] always emits that padding.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CharIndex, Intent, Token};

/// A char range of plain text marked with an edit intent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentSpan {
    pub start: usize,
    pub end: usize,
    pub intent: Intent,
}

impl IntentSpan {
    pub fn new(start: usize, end: usize, intent: Intent) -> Self {
        IntentSpan { start, end, intent }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }
}

/// Plain text plus the editable spans over it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedText {
    pub plain: String,
    pub spans: Vec<IntentSpan>,
}

impl AnnotatedText {
    pub fn new(plain: impl Into<String>, spans: Vec<IntentSpan>) -> Self {
        AnnotatedText {
            plain: plain.into(),
            spans,
        }
    }

    pub fn unannotated(plain: impl Into<String>) -> Self {
        Self::new(plain, Vec::new())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnnotationError {
    #[error("unbalanced tag at byte {offset}")]
    UnbalancedTag { offset: usize },
    #[error("nested tag at byte {offset}")]
    NestedTag { offset: usize },
    #[error("unknown tag at byte {offset}")]
    UnknownTag { offset: usize },
    #[error("spans {first} and {second} overlap")]
    OverlappingSpans { first: usize, second: usize },
    #[error("span {index} is empty, carries no intent, or lies outside the text")]
    InvalidSpan { index: usize },
    #[error("{tokens} tokens but {labels} labels")]
    LengthMismatch { tokens: usize, labels: usize },
}

/// Sorts spans and merges touching spans that share an intent.
///
/// Fails if two spans overlap or a span is empty, out of range or labeled
/// `None`.
pub fn canonicalize(
    spans: &[IntentSpan],
    text_len: usize,
) -> Result<Vec<IntentSpan>, AnnotationError> {
    let mut order: Vec<usize> = (0..spans.len()).collect();
    order.sort_by_key(|&i| (spans[i].start, spans[i].end));

    let mut out: Vec<IntentSpan> = Vec::with_capacity(spans.len());
    let mut last_index = None;
    for i in order {
        let span = spans[i];
        if span.is_empty() || span.end > text_len || !span.intent.is_edit() {
            return Err(AnnotationError::InvalidSpan { index: i });
        }
        if let Some(prev) = out.last_mut() {
            if span.start < prev.end {
                return Err(AnnotationError::OverlappingSpans {
                    first: last_index.unwrap_or(0),
                    second: i,
                });
            }
            if span.start == prev.end && span.intent == prev.intent {
                prev.end = span.end;
                last_index = Some(i);
                continue;
            }
        }
        out.push(span);
        last_index = Some(i);
    }
    Ok(out)
}

fn tag_intent(name: &str) -> Option<Intent> {
    match name {
        "clarity" => Some(Intent::Clarity),
        "coherence" => Some(Intent::Coherence),
        "fluency" => Some(Intent::Fluency),
        "style" => Some(Intent::Style),
        _ => None,
    }
}

/// Parses a tagged string into plain text and canonical spans.
pub fn parse_annotated(tagged: &str) -> Result<AnnotatedText, AnnotationError> {
    let bytes = tagged.as_bytes();
    let mut plain = String::with_capacity(tagged.len());
    let mut plain_chars = 0usize;
    let mut spans = Vec::new();
    // (intent, span start in chars, byte offset of the opening tag)
    let mut open: Option<(Intent, usize, usize)> = None;

    let mut pos = 0;
    while pos < bytes.len() {
        match bytes[pos] {
            b'<' => {
                let tag_start = pos;
                let close = tagged[pos..]
                    .find('>')
                    .map(|rel| pos + rel)
                    .ok_or(AnnotationError::UnknownTag { offset: pos })?;
                let inner = &tagged[pos + 1..close];
                let (closing, name) = match inner.strip_prefix('/') {
                    Some(name) => (true, name),
                    None => (false, inner),
                };
                let intent = tag_intent(name).ok_or(AnnotationError::UnknownTag { offset: pos })?;
                pos = close + 1;

                if closing {
                    match open.take() {
                        Some((open_intent, start, _)) if open_intent == intent => {
                            if plain_chars > start && plain.ends_with(' ') {
                                plain.pop();
                                plain_chars -= 1;
                            }
                            if plain_chars > start {
                                spans.push(IntentSpan::new(start, plain_chars, intent));
                            }
                        }
                        _ => return Err(AnnotationError::UnbalancedTag { offset: tag_start }),
                    }
                } else {
                    if open.is_some() {
                        return Err(AnnotationError::NestedTag { offset: tag_start });
                    }
                    open = Some((intent, plain_chars, tag_start));
                    if bytes.get(pos) == Some(&b' ') {
                        pos += 1;
                    }
                }
            }
            b'&' => {
                let rest = &tagged[pos..];
                let (ch, width) = if rest.starts_with("&amp;") {
                    ('&', 5)
                } else if rest.starts_with("&lt;") {
                    ('<', 4)
                } else if rest.starts_with("&gt;") {
                    ('>', 4)
                } else {
                    ('&', 1)
                };
                plain.push(ch);
                plain_chars += 1;
                pos += width;
            }
            _ => {
                let ch = tagged[pos..].chars().next().expect("in bounds");
                plain.push(ch);
                plain_chars += 1;
                pos += ch.len_utf8();
            }
        }
    }
    if let Some((_, _, offset)) = open {
        return Err(AnnotationError::UnbalancedTag { offset });
    }
    let spans = canonicalize(&spans, plain_chars)?;
    Ok(AnnotatedText { plain, spans })
}

fn push_escaped(out: &mut String, s: &str) {
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            c => out.push(c),
        }
    }
}

/// Renders plain text with its spans as a tagged string.
pub fn render_annotated(a: &AnnotatedText) -> Result<String, AnnotationError> {
    let idx = CharIndex::new(&a.plain);
    let spans = canonicalize(&a.spans, idx.len())?;
    let mut out = String::with_capacity(a.plain.len() + spans.len() * 24);
    let mut prev = 0;
    for span in &spans {
        push_escaped(&mut out, idx.slice(&a.plain, prev, span.start));
        out.push('<');
        out.push_str(span.intent.as_str());
        out.push_str("> ");
        push_escaped(&mut out, idx.slice(&a.plain, span.start, span.end));
        out.push_str(" </");
        out.push_str(span.intent.as_str());
        out.push('>');
        prev = span.end;
    }
    push_escaped(&mut out, idx.slice(&a.plain, prev, idx.len()));
    Ok(out)
}

/// Turns per-token labels into spans: each maximal run of equal non-`None`
/// labels becomes one span from the run's first token start to its last
/// token end.
pub fn spans_from_labels(
    tokens: &[Token],
    labels: &[Intent],
) -> Result<Vec<IntentSpan>, AnnotationError> {
    if tokens.len() != labels.len() {
        return Err(AnnotationError::LengthMismatch {
            tokens: tokens.len(),
            labels: labels.len(),
        });
    }
    let mut spans: Vec<IntentSpan> = Vec::new();
    let mut prev_label = Intent::None;
    for (token, &label) in tokens.iter().zip(labels) {
        if label.is_edit() {
            match spans.last_mut() {
                Some(span) if prev_label == label => span.end = token.end,
                _ => spans.push(IntentSpan::new(token.start, token.end, label)),
            }
        }
        prev_label = label;
    }
    Ok(spans)
}

/// Sentence-level baseline input: the intent tag followed by the sentence.
pub fn render_sentence_prefix(plain: &str, intent: Intent) -> String {
    debug_assert!(intent.is_edit(), "sentence prefix needs an edit intent");
    format!("<{}> {}", intent.as_str(), plain)
}

/// Splits a sentence-prefix string back into its intent and plain text.
pub fn strip_sentence_prefix(prefixed: &str) -> Option<(Intent, &str)> {
    let rest = prefixed.strip_prefix('<')?;
    let (name, rest) = rest.split_once("> ")?;
    Some((tag_intent(name)?, rest))
}
