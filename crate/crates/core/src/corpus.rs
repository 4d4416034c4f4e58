//! Training and evaluation data: meaning-change filtering, mapping external
//! editing corpora onto the intent taxonomy, unified records, statistics and
//! detector context windows.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::editops::{extract_edits, project_labels, Edit, EditError};
use crate::model::{tokenize, ContextMode, Intent};

/// Separator placed between sentences of a multi-sentence detector window.
pub const SENTENCE_BOUNDARY: &str = " </s> ";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("before text is empty, length ratio is undefined")]
    EmptyBefore,
    #[error("malformed record on line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("sentence index {index} out of range for {len} sentences")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid filter configuration: {0}")]
    InvalidFilter(&'static str),
    #[error(transparent)]
    Edit(#[from] EditError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceDataset {
    Iterater,
    Nucle,
    Lang8,
    Discofuse,
    Newsela,
    Wikilarge,
    SplitRephrase,
    Gyafc,
}

impl SourceDataset {
    pub const ALL: [SourceDataset; 8] = [
        SourceDataset::Iterater,
        SourceDataset::Nucle,
        SourceDataset::Lang8,
        SourceDataset::Discofuse,
        SourceDataset::Newsela,
        SourceDataset::Wikilarge,
        SourceDataset::SplitRephrase,
        SourceDataset::Gyafc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SourceDataset::Iterater => "iterater",
            SourceDataset::Nucle => "nucle",
            SourceDataset::Lang8 => "lang8",
            SourceDataset::Discofuse => "discofuse",
            SourceDataset::Newsela => "newsela",
            SourceDataset::Wikilarge => "wikilarge",
            SourceDataset::SplitRephrase => "split-rephrase",
            SourceDataset::Gyafc => "gyafc",
        }
    }

    /// Intent every pair of this corpus is labeled with; `None` for IteraTeR,
    /// whose records carry their own labels.
    pub fn intent(self) -> Option<Intent> {
        match self {
            SourceDataset::Iterater => None,
            // grammatical error correction
            SourceDataset::Nucle | SourceDataset::Lang8 => Some(Intent::Fluency),
            // simplification and sentence splitting
            SourceDataset::Newsela | SourceDataset::Wikilarge | SourceDataset::SplitRephrase => {
                Some(Intent::Clarity)
            }
            // sentence fusion
            SourceDataset::Discofuse => Some(Intent::Coherence),
            // informal to formal
            SourceDataset::Gyafc => Some(Intent::Style),
        }
    }

    pub fn group(self) -> SourceGroup {
        match self {
            SourceDataset::Iterater => SourceGroup::Iterater,
            _ => SourceGroup::TaskSpecific,
        }
    }
}

impl fmt::Display for SourceDataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SourceDataset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        SourceDataset::ALL
            .into_iter()
            .find(|d| d.as_str() == norm)
            .ok_or_else(|| format!("unknown source dataset {s:?}"))
    }
}

/// Whether a record comes from IteraTeR itself or from an added task corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceGroup {
    Iterater,
    TaskSpecific,
}

impl SourceGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceGroup::Iterater => "iterater",
            SourceGroup::TaskSpecific => "task-specific",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "valid" | "dev" | "validation" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            _ => Err(format!("unknown split {s:?}")),
        }
    }
}

/// Thresholds for dropping pairs whose revision rewrote too much.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub min_len_ratio: f64,
    pub max_len_ratio: f64,
    pub min_char_similarity: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_len_ratio: 0.5,
            max_len_ratio: 2.0,
            min_char_similarity: 0.35,
        }
    }
}

impl FilterConfig {
    pub fn new(min_len_ratio: f64, max_len_ratio: f64, min_char_similarity: f64) -> Result<Self, CorpusError> {
        let cfg = FilterConfig {
            min_len_ratio,
            max_len_ratio,
            min_char_similarity,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if !(self.min_len_ratio > 0.0 && self.min_len_ratio <= 1.0) {
            return Err(CorpusError::InvalidFilter("min_len_ratio must be in (0, 1]"));
        }
        if !(self.max_len_ratio >= 1.0 && self.max_len_ratio.is_finite()) {
            return Err(CorpusError::InvalidFilter("max_len_ratio must be finite and at least 1"));
        }
        if !(0.0..=1.0).contains(&self.min_char_similarity) {
            return Err(CorpusError::InvalidFilter("min_char_similarity must be in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", content = "value", rename_all = "snake_case")]
pub enum DiscardReason {
    LenRatio(f64),
    CharSimilarity(f64),
    /// Meaning-changed or other edits, outside the four modeled intents.
    OutOfTaxonomy(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FilterDecision {
    Keep,
    Discard(DiscardReason),
}

/// Character-level Levenshtein distance.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - levenshtein / max_len`; two empty strings are identical.
pub fn char_similarity(a: &str, b: &str) -> f64 {
    let max_len = a.chars().count().max(b.chars().count());
    if max_len == 0 {
        return 1.0;
    }
    1.0 - levenshtein(a, b) as f64 / max_len as f64
}

/// Length ratio is checked before similarity, so a pair failing both is
/// reported with its length ratio.
pub fn filter_pair(before: &str, after: &str, cfg: &FilterConfig) -> Result<FilterDecision, CorpusError> {
    let before_len = before.chars().count();
    if before_len == 0 {
        return Err(CorpusError::EmptyBefore);
    }
    let ratio = after.chars().count() as f64 / before_len as f64;
    if ratio < cfg.min_len_ratio || ratio > cfg.max_len_ratio {
        return Ok(FilterDecision::Discard(DiscardReason::LenRatio(ratio)));
    }
    let sim = char_similarity(before, after);
    if sim < cfg.min_char_similarity {
        return Ok(FilterDecision::Discard(DiscardReason::CharSimilarity(sim)));
    }
    Ok(FilterDecision::Keep)
}

/// One parallel pair as read from an input file, before filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPair {
    pub line: usize,
    pub before: String,
    pub after: String,
    /// Label carried by the record itself (IteraTeR), lowercased.
    pub label: Option<String>,
    pub doc_id: Option<String>,
}

#[derive(Deserialize)]
struct IteraterLine {
    #[serde(alias = "before")]
    before_sent: String,
    #[serde(alias = "after")]
    after_sent: String,
    #[serde(alias = "intent", alias = "label")]
    labels: String,
    #[serde(default)]
    doc_id: Option<serde_json::Value>,
}

/// Parses one input line; blank lines yield `Ok(None)`. `line` is 1-based.
///
/// IteraTeR files are JSON lines with `before_sent`, `after_sent` and
/// `labels`; every other corpus is `before <TAB> after`.
pub fn parse_raw_line(dataset: SourceDataset, line: usize, text: &str) -> Result<Option<RawPair>, CorpusError> {
    let text = text.strip_suffix('\r').unwrap_or(text);
    if text.trim().is_empty() {
        return Ok(None);
    }
    let malformed = |reason: String| CorpusError::MalformedRecord { line, reason };
    if dataset == SourceDataset::Iterater {
        let rec: IteraterLine = serde_json::from_str(text).map_err(|e| malformed(e.to_string()))?;
        let doc_id = rec.doc_id.map(|v| match v {
            serde_json::Value::String(s) => s,
            other => other.to_string(),
        });
        return Ok(Some(RawPair {
            line,
            before: rec.before_sent,
            after: rec.after_sent,
            label: Some(rec.labels.trim().to_ascii_lowercase()),
            doc_id,
        }));
    }
    let mut fields = text.split('\t');
    match (fields.next(), fields.next(), fields.next()) {
        (Some(before), Some(after), None) => Ok(Some(RawPair {
            line,
            before: before.to_string(),
            after: after.to_string(),
            label: None,
            doc_id: None,
        })),
        _ => Err(malformed("expected exactly two tab-separated fields".into())),
    }
}

/// A unified before/after training or evaluation instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub record_id: String,
    pub source_dataset: SourceDataset,
    pub split: Split,
    pub before: String,
    pub after: String,
    pub intent: Intent,
    pub edits: Vec<Edit>,
    /// One label per token of `before`.
    pub labels: Vec<Intent>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Ingested {
    Record(CorpusRecord),
    Discarded { line: usize, reason: DiscardReason },
}

/// Filters one pair and, if kept, turns it into a record with extracted
/// edits and projected token labels.
pub fn build_record(
    dataset: SourceDataset,
    split: Split,
    raw: RawPair,
    cfg: &FilterConfig,
) -> Result<Ingested, CorpusError> {
    let line = raw.line;
    let decision = filter_pair(&raw.before, &raw.after, cfg).map_err(|e| match e {
        CorpusError::EmptyBefore => CorpusError::MalformedRecord {
            line,
            reason: "empty before text".into(),
        },
        other => other,
    })?;
    if let FilterDecision::Discard(reason) = decision {
        return Ok(Ingested::Discarded { line, reason });
    }
    let intent = match (dataset.intent(), raw.label.as_deref()) {
        (Some(intent), _) => intent,
        (None, Some(label)) => match label.parse::<Intent>() {
            Ok(intent) if intent.is_edit() => intent,
            _ => {
                return Ok(Ingested::Discarded {
                    line,
                    reason: DiscardReason::OutOfTaxonomy(label.to_string()),
                })
            }
        },
        (None, None) => {
            return Err(CorpusError::MalformedRecord {
                line,
                reason: "missing intent label".into(),
            })
        }
    };
    let edits = extract_edits(&raw.before, &raw.after, intent)?;
    let labels = project_labels(&raw.before, &edits)?;
    let record_id = match &raw.doc_id {
        Some(doc) => format!("{dataset}-{split}-{doc}-{line}"),
        None => format!("{dataset}-{split}-{line}"),
    };
    Ok(Ingested::Record(CorpusRecord {
        record_id,
        source_dataset: dataset,
        split,
        before: raw.before,
        after: raw.after,
        intent,
        edits,
        labels,
    }))
}

/// Kept and discarded counts of an ingest run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub total: u64,
    pub kept: u64,
    pub len_ratio: u64,
    pub char_similarity: u64,
    pub out_of_taxonomy: u64,
}

impl FilterReport {
    pub fn record(&mut self, outcome: &Ingested) {
        self.total += 1;
        match outcome {
            Ingested::Record(_) => self.kept += 1,
            Ingested::Discarded { reason, .. } => match reason {
                DiscardReason::LenRatio(_) => self.len_ratio += 1,
                DiscardReason::CharSimilarity(_) => self.char_similarity += 1,
                DiscardReason::OutOfTaxonomy(_) => self.out_of_taxonomy += 1,
            },
        }
    }

    pub fn merge(&mut self, other: &FilterReport) {
        self.total += other.total;
        self.kept += other.kept;
        self.len_ratio += other.len_ratio;
        self.char_similarity += other.char_similarity;
        self.out_of_taxonomy += other.out_of_taxonomy;
    }

    /// Share of all pairs removed by the length-ratio and similarity checks.
    pub fn filtered_fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            (self.len_ratio + self.char_similarity) as f64 / self.total as f64
        }
    }
}

/// Ingests a whole file held in memory. Use [`parse_raw_line`] and
/// [`build_record`] directly to stream.
pub fn ingest(
    dataset: SourceDataset,
    split: Split,
    input: &str,
    cfg: &FilterConfig,
) -> Result<(Vec<CorpusRecord>, FilterReport), CorpusError> {
    cfg.validate()?;
    let mut records = Vec::new();
    let mut report = FilterReport::default();
    for (i, line) in input.lines().enumerate() {
        let Some(raw) = parse_raw_line(dataset, i + 1, line)? else {
            continue;
        };
        let outcome = build_record(dataset, split, raw, cfg)?;
        report.record(&outcome);
        if let Ingested::Record(r) = outcome {
            records.push(r);
        }
    }
    Ok((records, report))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupCounts {
    pub sentences: u64,
    pub edits: u64,
}

impl GroupCounts {
    fn add(&mut self, other: GroupCounts) {
        self.sentences += other.sentences;
        self.edits += other.edits;
    }
}

/// Sentence and edit counts per intent and source group.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorpusStats {
    pub cells: BTreeMap<(Intent, SourceGroup), GroupCounts>,
}

#[derive(Serialize)]
struct StatsRow {
    intent: Intent,
    group: SourceGroup,
    sentences: u64,
    edits: u64,
}

impl Serialize for CorpusStats {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.cells.iter().map(|(&(intent, group), c)| StatsRow {
            intent,
            group,
            sentences: c.sentences,
            edits: c.edits,
        }))
    }
}

impl CorpusStats {
    pub fn add(&mut self, record: &CorpusRecord) {
        self.cells
            .entry((record.intent, record.source_dataset.group()))
            .or_default()
            .add(GroupCounts {
                sentences: 1,
                edits: record.edits.len() as u64,
            });
    }

    pub fn merge(&mut self, other: &CorpusStats) {
        for (key, counts) in &other.cells {
            self.cells.entry(*key).or_default().add(*counts);
        }
    }

    pub fn get(&self, intent: Intent, group: SourceGroup) -> GroupCounts {
        self.cells.get(&(intent, group)).copied().unwrap_or_default()
    }

    pub fn intent_total(&self, intent: Intent) -> GroupCounts {
        let mut total = GroupCounts::default();
        for ((i, _), c) in &self.cells {
            if *i == intent {
                total.add(*c);
            }
        }
        total
    }

    pub fn total(&self) -> GroupCounts {
        let mut total = GroupCounts::default();
        for c in self.cells.values() {
            total.add(*c);
        }
        total
    }

    /// Fixed-width table, one row per edit intent plus a total row.
    pub fn report(&self) -> String {
        let mut out = format!(
            "{:<10} {:>12} {:>12} {:>14} {:>14} {:>12} {:>12}\n",
            "intent", "iterater.sent", "iterater.edit", "task.sent", "task.edit", "total.sent", "total.edit"
        );
        let mut row = |name: &str, it: GroupCounts, task: GroupCounts| {
            out.push_str(&format!(
                "{:<10} {:>12} {:>12} {:>14} {:>14} {:>12} {:>12}\n",
                name,
                it.sentences,
                it.edits,
                task.sentences,
                task.edits,
                it.sentences + task.sentences,
                it.edits + task.edits
            ));
        };
        let mut it_total = GroupCounts::default();
        let mut task_total = GroupCounts::default();
        for intent in Intent::EDIT_INTENTS {
            let it = self.get(intent, SourceGroup::Iterater);
            let task = self.get(intent, SourceGroup::TaskSpecific);
            it_total.add(it);
            task_total.add(task);
            row(intent.as_str(), it, task);
        }
        row("total", it_total, task_total);
        out
    }
}

pub fn corpus_stats<'a>(records: impl IntoIterator<Item = &'a CorpusRecord>) -> CorpusStats {
    let mut stats = CorpusStats::default();
    for r in records {
        stats.add(r);
    }
    stats
}

/// Detector input for one sentence, optionally with its neighbours.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorExample {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_before: Option<String>,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_after: Option<String>,
    /// Gold labels for the tokens of `text` only; empty when unlabeled.
    #[serde(default)]
    pub labels: Vec<Intent>,
}

impl DetectorExample {
    /// The window as one string with boundary markers between sentences.
    pub fn joined(&self) -> String {
        let mut out = String::new();
        if let Some(prev) = &self.context_before {
            out.push_str(prev);
            out.push_str(SENTENCE_BOUNDARY);
        }
        out.push_str(&self.text);
        if let Some(next) = &self.context_after {
            out.push_str(SENTENCE_BOUNDARY);
            out.push_str(next);
        }
        out
    }

    /// Labels aligned with `tokenize(self.joined())`; context and marker
    /// tokens carry no label.
    pub fn joined_labels(&self) -> Vec<Option<Intent>> {
        let lead = match &self.context_before {
            Some(prev) => tokenize(prev).len() + tokenize(SENTENCE_BOUNDARY).len(),
            None => 0,
        };
        let trail = match &self.context_after {
            Some(next) => tokenize(next).len() + tokenize(SENTENCE_BOUNDARY).len(),
            None => 0,
        };
        let mut out = vec![None; lead];
        out.extend(self.labels.iter().map(|&l| Some(l)));
        out.extend(std::iter::repeat_n(None, trail));
        out
    }
}

/// Window around sentence `index`. `labels`, when given, holds per-sentence
/// gold labels; only the center sentence's are kept.
pub fn build_context_window<S: AsRef<str>>(
    sentences: &[S],
    labels: Option<&[Vec<Intent>]>,
    index: usize,
    mode: ContextMode,
) -> Result<DetectorExample, CorpusError> {
    if index >= sentences.len() {
        return Err(CorpusError::IndexOutOfRange {
            index,
            len: sentences.len(),
        });
    }
    let (context_before, context_after) = match mode {
        ContextMode::SingleSentence => (None, None),
        ContextMode::MultiSentence => (
            index.checked_sub(1).map(|i| sentences[i].as_ref().to_string()),
            sentences.get(index + 1).map(|s| s.as_ref().to_string()),
        ),
    };
    Ok(DetectorExample {
        context_before,
        text: sentences[index].as_ref().to_string(),
        context_after,
        labels: labels
            .and_then(|l| l.get(index))
            .cloned()
            .unwrap_or_default(),
    })
}
