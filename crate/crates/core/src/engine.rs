//! The delineate-edit-iterate controller.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use thiserror::Error;

use crate::annotation::{spans_from_labels, AnnotatedText, AnnotationError, IntentSpan};
use crate::backends::{BackendError, DetectRequest, Detector, Reviser};
use crate::editops::{extract_edits, revert_outside_spans, Edit, EditError, RevisionStep, RevisionTrace, StopReason};
use crate::metrics::{rouge_l, sari, sentence_bleu_smoothed, MetricError};
use crate::model::{
    split_sentences, tokenize, AnnotationMode, CharIndex, ContextMode, Document, EngineConfig, Intent, InvalidConfig,
    QualityMetric, Sentence,
};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    InvalidConfig(#[from] InvalidConfig),
    #[error("document {0:?} has no text")]
    EmptyDocument(String),
    #[error("quality guard is configured but no references were supplied")]
    MissingReferences,
    /// A backend failed; `partial` holds the steps completed before it.
    #[error("backend failed at depth {depth}: {source}")]
    Backend {
        depth: usize,
        #[source]
        source: BackendError,
        partial: Vec<RevisionStep>,
    },
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    Edit(#[from] EditError),
}

impl EngineError {
    /// Steps completed before a backend failure.
    pub fn partial_steps(&self) -> &[RevisionStep] {
        match self {
            EngineError::Backend { partial, .. } => partial,
            _ => &[],
        }
    }
}

/// Result of one revision round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RoundOutcome {
    /// Every token was labeled NONE; nothing was sent to the reviser.
    NoSpans { labels: Vec<Intent> },
    Step(RevisionStep),
}

#[derive(Debug, Clone)]
pub struct Pipeline<D, R> {
    pub detector: D,
    pub reviser: R,
    pub config: EngineConfig,
}

fn backend(depth: usize) -> impl FnOnce(BackendError) -> EngineError {
    move |source| EngineError::Backend {
        depth,
        source,
        partial: Vec::new(),
    }
}

/// Intent covering the most tokens of a flagged sentence, ties broken by the
/// fixed intent order.
fn majority_intent(labels: &[Intent]) -> Option<Intent> {
    let mut counts = [0.0; 5];
    for l in labels.iter().filter(|l| l.is_edit()) {
        counts[*l as usize] += 1.0;
    }
    if counts.iter().all(|&c| c == 0.0) {
        return None;
    }
    counts[Intent::None as usize] = -1.0;
    Some(Intent::argmax(&counts))
}

/// Intent of the span overlapping `edit` the most, else the nearest span.
fn edit_intent(edit: &Edit, spans: &[IntentSpan]) -> Intent {
    // overlap length, or minus the gap when they are apart
    let score = |s: &IntentSpan| edit.src_end.min(s.end) as isize - edit.src_start.max(s.start) as isize;
    spans
        .iter()
        .max_by_key(|s| (score(s), std::cmp::Reverse(s.start)))
        .map_or(Intent::Clarity, |s| s.intent)
}

/// Labels every token of `text`, sentence by sentence, returning one label
/// list per sentence.
fn detect_sentences<D: Detector + ?Sized>(
    detector: &D,
    config: &EngineConfig,
    text: &str,
    idx: &CharIndex,
    sentences: &[Sentence],
    depth: usize,
) -> Result<Vec<Vec<Intent>>, EngineError> {
    let mut out = Vec::with_capacity(sentences.len());
    for (i, s) in sentences.iter().enumerate() {
        let sentence = idx.slice(text, s.start, s.end);
        let neighbour = |j: Option<usize>| {
            j.and_then(|j| sentences.get(j))
                .map(|n| idx.slice(text, n.start, n.end))
        };
        let (context_before, context_after) = match config.context_mode {
            ContextMode::SingleSentence => (None, None),
            ContextMode::MultiSentence => (neighbour(i.checked_sub(1)), neighbour(Some(i + 1))),
        };
        let request = DetectRequest {
            text: sentence,
            context_before,
            context_after,
            multi_task: config.gate_on_needs_edit,
        };
        let output = detector.detect(&request).map_err(backend(depth))?;
        let expected = tokenize(sentence).len();
        if output.labels.len() != expected {
            return Err(backend(depth)(BackendError::LengthMismatch {
                expected,
                got: output.labels.len(),
            }));
        }
        let labels = if config.gate_on_needs_edit && output.needs_edit == Some(false) {
            vec![Intent::None; expected]
        } else {
            output.labels
        };
        out.push(labels);
    }
    Ok(out)
}

/// Spans of one sentence, in document offsets. Spans never cross sentences.
fn sentence_spans(
    text: &str,
    idx: &CharIndex,
    s: &Sentence,
    labels: &[Intent],
    mode: AnnotationMode,
) -> Result<Vec<IntentSpan>, EngineError> {
    let tokens = tokenize(idx.slice(text, s.start, s.end));
    let mut spans = spans_from_labels(&tokens, labels)?;
    if mode == AnnotationMode::SentencePrefix {
        spans = match majority_intent(labels) {
            Some(intent) => vec![IntentSpan::new(0, s.end - s.start, intent)],
            None => Vec::new(),
        };
    }
    for span in &mut spans {
        span.start += s.start;
        span.end += s.start;
    }
    Ok(spans)
}

/// Token labels and editable spans for a whole document, detected sentence
/// by sentence as in a revision round.
pub fn detect_spans<D: Detector + ?Sized>(
    detector: &D,
    text: &str,
    config: &EngineConfig,
) -> Result<(Vec<Intent>, Vec<IntentSpan>), EngineError> {
    let idx = CharIndex::new(text);
    let sentences = split_sentences(text);
    let per_sentence = detect_sentences(detector, config, text, &idx, &sentences, 1)?;
    let mut spans = Vec::new();
    for (s, labels) in sentences.iter().zip(&per_sentence) {
        spans.extend(sentence_spans(text, &idx, s, labels, config.annotation_mode)?);
    }
    Ok((per_sentence.into_iter().flatten().collect(), spans))
}

impl<D: Detector, R: Reviser> Pipeline<D, R> {
    pub fn new(detector: D, reviser: R, config: EngineConfig) -> Self {
        Pipeline {
            detector,
            reviser,
            config,
        }
    }

    /// One detect-and-revise round over `doc`.
    ///
    /// Each flagged sentence gets its own reviser call: in span-tag mode the
    /// input is the sentence (with its neighbours in multi-sentence mode)
    /// carrying that sentence's spans; in sentence-prefix mode it is the
    /// sentence alone under its majority intent. Changes the reviser makes
    /// outside the editable spans are reverted.
    pub fn revise_once(&self, doc: &Document) -> Result<RoundOutcome, EngineError> {
        let depth = doc.depth + 1;
        let before = doc.text.as_str();
        if before.trim().is_empty() {
            return Err(EngineError::EmptyDocument(doc.doc_id.clone()));
        }
        let idx = CharIndex::new(before);
        let sentences = split_sentences(before);
        let per_sentence = detect_sentences(&self.detector, &self.config, before, &idx, &sentences, depth)?;
        let labels: Vec<Intent> = per_sentence.iter().flatten().copied().collect();
        if labels.len() != tokenize(before).len() {
            return Err(backend(depth)(BackendError::LengthMismatch {
                expected: tokenize(before).len(),
                got: labels.len(),
            }));
        }
        if labels.iter().all(|l| !l.is_edit()) {
            return Ok(RoundOutcome::NoSpans { labels });
        }

        // spans per sentence, in document char offsets of `before`
        let sentence_spans = sentences
            .iter()
            .zip(&per_sentence)
            .map(|(s, sl)| sentence_spans(before, &idx, s, sl, self.config.annotation_mode))
            .collect::<Result<Vec<_>, _>>()?;

        // Revise sentence by sentence, tracking where each sentence now sits.
        let mut current: Vec<char> = before.chars().collect();
        let mut ranges: Vec<(usize, usize)> = sentences.iter().map(|s| (s.start, s.end)).collect();
        for i in 0..sentences.len() {
            let spans = &sentence_spans[i];
            if spans.is_empty() {
                continue;
            }
            let shift = ranges[i].0 as isize - sentences[i].start as isize;
            let (win_start, win_end) = match (self.config.context_mode, self.config.annotation_mode) {
                (ContextMode::MultiSentence, AnnotationMode::SpanTags) => (
                    ranges[i.saturating_sub(1)].0,
                    ranges[(i + 1).min(ranges.len() - 1)].1,
                ),
                _ => ranges[i],
            };
            let window: String = current[win_start..win_end].iter().collect();
            let local: Vec<IntentSpan> = spans
                .iter()
                .map(|s| {
                    let at = |x: usize| (x as isize + shift) as usize - win_start;
                    IntentSpan::new(at(s.start), at(s.end), s.intent)
                })
                .collect();
            let annotated = AnnotatedText::new(window.clone(), local.clone());
            let revised = self
                .reviser
                .revise(&annotated, self.config.annotation_mode)
                .map_err(backend(depth))?;
            let kept: Vec<char> = revert_outside_spans(&window, &local, &revised).chars().collect();
            let delta = kept.len() as isize - (win_end - win_start) as isize;
            current.splice(win_start..win_end, kept);
            ranges[i].1 = (ranges[i].1 as isize + delta) as usize;
            for r in &mut ranges[i + 1..] {
                r.0 = (r.0 as isize + delta) as usize;
                r.1 = (r.1 as isize + delta) as usize;
            }
        }
        let after: String = current.into_iter().collect();
        let spans: Vec<IntentSpan> = sentence_spans.into_iter().flatten().collect();
        let mut edits = extract_edits(before, &after, Intent::Clarity)?;
        for e in &mut edits {
            e.intent = edit_intent(e, &spans);
        }
        Ok(RoundOutcome::Step(RevisionStep {
            depth,
            before: before.to_string(),
            after,
            edits,
            detector_labels: labels,
            spans,
        }))
    }

    /// Iterates until no edit is made or a stopping criterion fires. Fails
    /// with [`EngineError::MissingReferences`] if a quality guard is set.
    pub fn iterate(&self, doc: &Document) -> Result<RevisionTrace, EngineError> {
        if self.config.quality_guard.is_some() {
            return Err(EngineError::MissingReferences);
        }
        self.run(doc, None)
    }

    /// Like [`Pipeline::iterate`], with references available to the quality
    /// guard (if one is configured).
    pub fn iterate_with_references(&self, doc: &Document, references: &[String]) -> Result<RevisionTrace, EngineError> {
        if self.config.quality_guard.is_some() && references.is_empty() {
            return Err(EngineError::MissingReferences);
        }
        self.run(doc, Some(references))
    }

    fn run(&self, doc: &Document, references: Option<&[String]>) -> Result<RevisionTrace, EngineError> {
        self.config.validate()?;
        let guard = match (self.config.quality_guard, references) {
            (Some(metric), Some(refs)) => Some((metric, refs)),
            _ => None,
        };
        let score = |text: &str, (metric, refs): (QualityMetric, &[String])| -> Result<f64, EngineError> {
            Ok(match metric {
                QualityMetric::Sari => sari(&doc.text, text, refs)?.score,
                QualityMetric::Bleu => sentence_bleu_smoothed(text, refs),
                QualityMetric::RougeL => rouge_l(text, refs)?.f,
            })
        };
        let mut prev_score = guard.map(|g| score(&doc.text, g)).transpose()?;

        let mut seen = StateHistory::default();
        seen.insert(&doc.text);
        let mut steps: Vec<RevisionStep> = Vec::new();
        let mut current = doc.clone();
        let stop_reason = loop {
            if steps.len() >= self.config.max_depth {
                break StopReason::MaxDepth;
            }
            let step = match self.revise_once(&current) {
                Ok(RoundOutcome::NoSpans { .. }) => break StopReason::NoEdit,
                Ok(RoundOutcome::Step(step)) => step,
                Err(EngineError::Backend { depth, source, .. }) => {
                    return Err(EngineError::Backend {
                        depth,
                        source,
                        partial: steps,
                    })
                }
                Err(e) => return Err(e),
            };
            if step.after == step.before {
                break StopReason::NoEdit;
            }
            if seen.contains(&step.after) {
                break StopReason::Oscillation;
            }
            if let (Some(g), Some(prev)) = (guard, prev_score) {
                let now = score(&step.after, g)?;
                if now < prev {
                    break StopReason::QualityDecrease;
                }
                prev_score = Some(now);
            }
            seen.insert(&step.after);
            current = Document {
                doc_id: doc.doc_id.clone(),
                text: step.after.clone(),
                depth: step.depth,
            };
            steps.push(step);
        };
        Ok(RevisionTrace {
            doc_id: doc.doc_id.clone(),
            group: None,
            steps,
            stop_reason,
        })
    }
}

/// Texts seen so far, looked up by hash and confirmed by comparison.
#[derive(Default)]
struct StateHistory {
    by_hash: HashMap<u64, Vec<String>>,
}

impl StateHistory {
    fn key(text: &str) -> u64 {
        let mut h = DefaultHasher::new();
        text.hash(&mut h);
        h.finish()
    }

    fn insert(&mut self, text: &str) {
        self.by_hash.entry(Self::key(text)).or_default().push(text.to_string());
    }

    fn contains(&self, text: &str) -> bool {
        self.by_hash
            .get(&Self::key(text))
            .is_some_and(|v| v.iter().any(|t| t == text))
    }
}
