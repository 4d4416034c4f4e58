//! Token alignment, edit extraction and application, span-bound validation
//! and projection of edits onto token labels.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::IntentSpan;
use crate::model::{tokenize, CharIndex, Intent, Token};

/// One step of a token alignment. Indices refer to the before/after token lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignOp {
    Match { before: usize, after: usize },
    Delete { before: usize },
    Insert { after: usize },
}

/// A replacement of `before[src_start..src_end]` (char offsets) by `replacement`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edit {
    pub src_start: usize,
    pub src_end: usize,
    pub replacement: String,
    pub intent: Intent,
}

impl Edit {
    pub fn new(src_start: usize, src_end: usize, replacement: impl Into<String>, intent: Intent) -> Self {
        Edit {
            src_start,
            src_end,
            replacement: replacement.into(),
            intent,
        }
    }

    pub fn is_insertion(&self) -> bool {
        self.src_start == self.src_end
    }
}

/// A change found outside every editable span.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub src_start: usize,
    pub src_end: usize,
    pub before: String,
    pub after: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "out-of-span change at {}..{}: {:?} -> {:?}",
            self.src_start, self.src_end, self.before, self.after
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EditError {
    #[error("edit {index} overlaps the edit before it")]
    OverlappingEdits { index: usize },
    #[error("edit {index} range {start}..{end} is outside a text of {len} chars")]
    RangeOutOfBounds {
        index: usize,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("edits must carry an edit intent, not none")]
    NoneIntent,
}

/// Why an iterated revision stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StopReason {
    NoEdit,
    MaxDepth,
    Oscillation,
    QualityDecrease,
}

/// One revision round: `apply_edits(before, edits) == after`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevisionStep {
    pub depth: usize,
    pub before: String,
    pub after: String,
    pub edits: Vec<Edit>,
    /// One label per token of `before`.
    pub detector_labels: Vec<Intent>,
    #[serde(default)]
    pub spans: Vec<IntentSpan>,
}

/// The full history of one document's iterative revision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevisionTrace {
    pub doc_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    pub steps: Vec<RevisionStep>,
    pub stop_reason: StopReason,
}

impl RevisionTrace {
    /// Text after the last step, or `None` when no step was taken.
    pub fn final_text(&self) -> Option<&str> {
        self.steps.last().map(|s| s.after.as_str())
    }
}

/// Minimal LCS edit script over token texts.
///
/// Ties prefer MATCH, then DELETE, then INSERT, so a replaced region always
/// lists its deletions before its insertions.
pub fn align(before: &[Token], after: &[Token]) -> Vec<AlignOp> {
    let a: Vec<&str> = before.iter().map(|t| t.text.as_str()).collect();
    let b: Vec<&str> = after.iter().map(|t| t.text.as_str()).collect();
    align_seq(&a, &b)
}

pub(crate) fn align_seq<T: PartialEq>(a: &[T], b: &[T]) -> Vec<AlignOp> {
    let mut ops = Vec::with_capacity(a.len().max(b.len()));
    let prefix = a.iter().zip(b).take_while(|(x, y)| x == y).count();
    for k in 0..prefix {
        ops.push(AlignOp::Match { before: k, after: k });
    }
    let (a_rest, b_rest) = (&a[prefix..], &b[prefix..]);
    let (n, m) = (a_rest.len(), b_rest.len());
    let width = m + 1;
    // lcs[i * width + j] = LCS length of a_rest[i..] and b_rest[j..]
    let mut lcs = vec![0u32; (n + 1) * width];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            lcs[i * width + j] = if a_rest[i] == b_rest[j] {
                lcs[(i + 1) * width + j + 1] + 1
            } else {
                lcs[(i + 1) * width + j].max(lcs[i * width + j + 1])
            };
        }
    }
    let (mut i, mut j) = (0, 0);
    while i < n || j < m {
        if i < n && j < m && a_rest[i] == b_rest[j] {
            ops.push(AlignOp::Match {
                before: prefix + i,
                after: prefix + j,
            });
            i += 1;
            j += 1;
        } else if i < n && (j == m || lcs[(i + 1) * width + j] >= lcs[i * width + j + 1]) {
            ops.push(AlignOp::Delete { before: prefix + i });
            i += 1;
        } else {
            ops.push(AlignOp::Insert { after: prefix + j });
            j += 1;
        }
    }
    ops
}

/// A differing region: `before[src]` became `after[dst]` (char ranges).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Region {
    pub src_start: usize,
    pub src_end: usize,
    pub dst_start: usize,
    pub dst_end: usize,
}

/// Differences between two texts, one region per gap between matched tokens.
///
/// Each region is trimmed to its differing chars and then widened to the
/// nearest token boundaries of `before`. Whitespace-only differences produce
/// regions too, so applying every region reproduces `after` exactly.
pub(crate) fn diff_regions(before: &str, after: &str) -> Vec<Region> {
    if before == after {
        return Vec::new();
    }
    let bt = tokenize(before);
    let at = tokenize(after);
    let bchars: Vec<char> = before.chars().collect();
    let achars: Vec<char> = after.chars().collect();

    let mut anchors: Vec<(usize, usize)> = align(&bt, &at)
        .into_iter()
        .filter_map(|op| match op {
            AlignOp::Match { before, after } => Some((before, after)),
            _ => None,
        })
        .collect();
    anchors.push((usize::MAX, usize::MAX));

    let mut regions = Vec::new();
    let (mut prev_b, mut prev_a) = (0usize, 0usize);
    let mut next_token = 0usize;
    for (bi, ai) in anchors {
        let (next_b, next_a) = if bi == usize::MAX {
            (bchars.len(), achars.len())
        } else {
            (bt[bi].start, at[ai].start)
        };
        let src = &bchars[prev_b..next_b];
        let dst = &achars[prev_a..next_a];
        if src != dst {
            let prefix = src.iter().zip(dst).take_while(|(x, y)| x == y).count();
            let suffix = src[prefix..]
                .iter()
                .rev()
                .zip(dst[prefix..].iter().rev())
                .take_while(|(x, y)| x == y)
                .count();
            let (trim_start, trim_end) = (prev_b + prefix, next_b - suffix);

            let mut boundaries = vec![prev_b];
            while next_token < bt.len() && bt[next_token].start < next_b {
                if bt[next_token].start >= prev_b {
                    boundaries.push(bt[next_token].start);
                    boundaries.push(bt[next_token].end);
                }
                next_token += 1;
            }
            boundaries.push(next_b);
            let start = boundaries
                .iter()
                .copied()
                .filter(|&p| p <= trim_start)
                .max()
                .unwrap_or(prev_b);
            let end = boundaries
                .iter()
                .copied()
                .filter(|&p| p >= trim_end)
                .min()
                .unwrap_or(next_b)
                .max(start);
            regions.push(Region {
                src_start: start,
                src_end: end,
                dst_start: prev_a + prefix - (trim_start - start),
                dst_end: next_a - suffix + (end - trim_end),
            });
        }
        if bi != usize::MAX {
            prev_b = bt[bi].end;
            prev_a = at[ai].end;
            while next_token < bt.len() && bt[next_token].start < prev_b {
                next_token += 1;
            }
        }
    }
    regions
}

/// Extracts the edits turning `before` into `after`, all labeled `intent`.
pub fn extract_edits(before: &str, after: &str, intent: Intent) -> Result<Vec<Edit>, EditError> {
    if !intent.is_edit() {
        return Err(EditError::NoneIntent);
    }
    let aidx = CharIndex::new(after);
    Ok(diff_regions(before, after)
        .into_iter()
        .map(|r| {
            Edit::new(
                r.src_start,
                r.src_end,
                aidx.slice(after, r.dst_start, r.dst_end),
                intent,
            )
        })
        .collect())
}

fn check_edits(len: usize, edits: &[Edit]) -> Result<(), EditError> {
    let mut prev_end = 0;
    for (index, e) in edits.iter().enumerate() {
        if e.src_start > e.src_end || e.src_end > len {
            return Err(EditError::RangeOutOfBounds {
                index,
                start: e.src_start,
                end: e.src_end,
                len,
            });
        }
        if e.src_start < prev_end {
            return Err(EditError::OverlappingEdits { index });
        }
        prev_end = e.src_end;
    }
    Ok(())
}

/// Applies sorted, non-overlapping edits to `before`.
pub fn apply_edits(before: &str, edits: &[Edit]) -> Result<String, EditError> {
    let idx = CharIndex::new(before);
    check_edits(idx.len(), edits)?;
    let mut out = String::with_capacity(before.len());
    let mut prev = 0;
    for e in edits {
        out.push_str(idx.slice(before, prev, e.src_start));
        out.push_str(&e.replacement);
        prev = e.src_end;
    }
    out.push_str(idx.slice(before, prev, idx.len()));
    Ok(out)
}

/// Char ranges a reviser may touch: each span widened over the whitespace on
/// either side of it, with touching ranges merged.
fn editable_ranges(chars: &[char], spans: &[IntentSpan]) -> Vec<(usize, usize)> {
    let mut ranges: Vec<(usize, usize)> = Vec::with_capacity(spans.len());
    let mut sorted: Vec<&IntentSpan> = spans.iter().collect();
    sorted.sort_by_key(|s| (s.start, s.end));
    for span in sorted {
        let mut start = span.start.min(chars.len());
        let mut end = span.end.min(chars.len());
        while start > 0 && chars[start - 1].is_whitespace() {
            start -= 1;
        }
        while end < chars.len() && chars[end].is_whitespace() {
            end += 1;
        }
        match ranges.last_mut() {
            Some(last) if start <= last.1 => last.1 = last.1.max(end),
            _ => ranges.push((start, end)),
        }
    }
    ranges
}

fn region_inside(ranges: &[(usize, usize)], r: &Region) -> bool {
    ranges.iter().any(|&(s, e)| s <= r.src_start && r.src_end <= e)
}

/// True iff `after` equals `before` with only the editable ranges rewritten.
fn only_ranges_changed(before: &str, idx: &CharIndex, ranges: &[(usize, usize)], after: &str) -> bool {
    if ranges.is_empty() {
        return before == after;
    }
    let first = idx.slice(before, 0, ranges[0].0);
    let last = idx.slice(before, ranges[ranges.len() - 1].1, idx.len());
    if first.len() + last.len() > after.len() || !after.starts_with(first) || !after.ends_with(last) {
        return false;
    }
    let mut rest = &after[first.len()..after.len() - last.len()];
    for w in ranges.windows(2) {
        let gap = idx.slice(before, w[0].1, w[1].0);
        match rest.find(gap) {
            Some(at) => rest = &rest[at + gap.len()..],
            None => return false,
        }
    }
    true
}

/// Splits a region at chars that survive unchanged inside it, then widens
/// each piece back out to token boundaries of `before`, merging pieces whose
/// widened extents meet.
fn refine_region(bchars: &[char], achars: &[char], boundaries: &[usize], r: Region) -> Vec<Region> {
    let src = &bchars[r.src_start..r.src_end];
    let dst = &achars[r.dst_start..r.dst_end];
    let mut pieces: Vec<Region> = Vec::new();
    let mut open: Option<Region> = None;
    let (mut i, mut j) = (0, 0);
    for op in align_seq(src, dst).into_iter().chain([AlignOp::Match { before: src.len(), after: dst.len() }]) {
        match op {
            AlignOp::Match { before, after } => {
                if let Some(piece) = open.take() {
                    pieces.push(piece);
                }
                i = before + 1;
                j = after + 1;
            }
            AlignOp::Delete { before } => {
                let piece = open.get_or_insert(Region {
                    src_start: r.src_start + before,
                    src_end: r.src_start + before,
                    dst_start: r.dst_start + j,
                    dst_end: r.dst_start + j,
                });
                piece.src_end = r.src_start + before + 1;
                i = before + 1;
            }
            AlignOp::Insert { after } => {
                let piece = open.get_or_insert(Region {
                    src_start: r.src_start + i,
                    src_end: r.src_start + i,
                    dst_start: r.dst_start + after,
                    dst_end: r.dst_start + after,
                });
                piece.dst_end = r.dst_start + after + 1;
                j = after + 1;
            }
        }
    }

    let widen_src = |p: &Region| -> (usize, usize) {
        let below = boundaries.partition_point(|&b| b <= p.src_start);
        let start = boundaries[..below].last().copied().unwrap_or(r.src_start).max(r.src_start);
        let above = boundaries.partition_point(|&b| b < p.src_end);
        let end = boundaries.get(above).copied().unwrap_or(r.src_end).min(r.src_end).max(start);
        (start, end)
    };
    let mut groups: Vec<Region> = Vec::new();
    for piece in pieces {
        groups.push(piece);
        while groups.len() >= 2 {
            let top = groups[groups.len() - 1];
            let prev = groups[groups.len() - 2];
            if widen_src(&prev).1 <= widen_src(&top).0 {
                break;
            }
            groups.pop();
            let merged = groups.last_mut().expect("two groups");
            merged.src_end = top.src_end;
            merged.dst_end = top.dst_end;
        }
    }
    // widened extents of neighbouring groups no longer overlap, so the chars
    // each widening absorbs are unchanged ones
    groups
        .iter()
        .map(|p| {
            let (start, end) = widen_src(p);
            Region {
                src_start: start,
                src_end: end,
                dst_start: p.dst_start - (p.src_start - start),
                dst_end: p.dst_end + (end - p.src_end),
            }
        })
        .collect()
}

fn token_boundaries(before: &str) -> Vec<usize> {
    let mut b = vec![0];
    for t in tokenize(before) {
        b.push(t.start);
        b.push(t.end);
    }
    b.push(before.chars().count());
    b.sort_unstable();
    b.dedup();
    b
}

/// Diff regions of `before`/`after`, with regions that are not wholly
/// editable split down to their finest token-bounded pieces.
fn classified_regions(
    before: &str,
    after: &str,
    ranges: &[(usize, usize)],
) -> Vec<(Region, bool)> {
    let bchars: Vec<char> = before.chars().collect();
    let achars: Vec<char> = after.chars().collect();
    let mut boundaries: Option<Vec<usize>> = None;
    let mut out = Vec::new();
    for r in diff_regions(before, after) {
        if region_inside(ranges, &r) {
            out.push((r, true));
            continue;
        }
        let boundaries = boundaries.get_or_insert_with(|| token_boundaries(before));
        for piece in refine_region(&bchars, &achars, boundaries, r) {
            out.push((piece, region_inside(ranges, &piece)));
        }
    }
    out
}

/// Reports changes between `before` and `after` that fall outside `spans`.
///
/// Each span's editable area includes the whitespace around it, and an
/// insertion touching that area counts as inside. The result is empty iff
/// `after` can be produced by rewriting only those areas.
pub fn validate_within_spans(before: &str, spans: &[IntentSpan], after: &str) -> Vec<Violation> {
    let bchars: Vec<char> = before.chars().collect();
    let ranges = editable_ranges(&bchars, spans);
    let idx = CharIndex::new(before);
    if only_ranges_changed(before, &idx, &ranges, after) {
        return Vec::new();
    }
    let aidx = CharIndex::new(after);
    classified_regions(before, after, &ranges)
        .into_iter()
        .filter(|(_, inside)| !inside)
        .map(|(r, _)| Violation {
            src_start: r.src_start,
            src_end: r.src_end,
            before: idx.slice(before, r.src_start, r.src_end).to_string(),
            after: aidx.slice(after, r.dst_start, r.dst_end).to_string(),
        })
        .collect()
}

/// Reverts every change of `after` that lies outside `spans`, keeping the
/// in-span ones. The result always passes [`validate_within_spans`].
pub fn revert_outside_spans(before: &str, spans: &[IntentSpan], after: &str) -> String {
    let bchars: Vec<char> = before.chars().collect();
    let ranges = editable_ranges(&bchars, spans);
    let idx = CharIndex::new(before);
    if only_ranges_changed(before, &idx, &ranges, after) {
        return after.to_string();
    }
    let aidx = CharIndex::new(after);
    let kept: Vec<Edit> = classified_regions(before, after, &ranges)
        .into_iter()
        .filter(|(_, inside)| *inside)
        .map(|(r, _)| {
            Edit::new(
                r.src_start,
                r.src_end,
                aidx.slice(after, r.dst_start, r.dst_end),
                Intent::Clarity,
            )
        })
        .collect();
    apply_edits(before, &kept).expect("diff regions are sorted and in range")
}

/// Projects edits onto one label per token of `before`.
///
/// A token takes the intent of the first edit whose source range overlaps it.
/// An edit overlapping no token (a pure insertion, or a change confined to
/// whitespace) labels the token containing its position, else the nearest
/// token to its left, else the first token.
pub fn project_labels(before: &str, edits: &[Edit]) -> Result<Vec<Intent>, EditError> {
    let tokens = tokenize(before);
    check_edits(before.chars().count(), edits)?;
    let mut labels = vec![Intent::None; tokens.len()];
    if tokens.is_empty() {
        return Ok(labels);
    }
    let mark = |k: usize, intent: Intent, labels: &mut Vec<Intent>| {
        if labels[k] == Intent::None {
            labels[k] = intent;
        }
    };
    for e in edits {
        if !e.intent.is_edit() {
            return Err(EditError::NoneIntent);
        }
        let (s, t) = (e.src_start, e.src_end);
        let first = tokens.partition_point(|tok| tok.end <= s);
        let mut overlapped = false;
        if s < t {
            for (k, tok) in tokens.iter().enumerate().skip(first) {
                if tok.start >= t {
                    break;
                }
                mark(k, e.intent, &mut labels);
                overlapped = true;
            }
        }
        if overlapped {
            continue;
        }
        let target = if first < tokens.len() && tokens[first].start < s {
            first
        } else if first > 0 {
            first - 1
        } else {
            0
        };
        mark(target, e.intent, &mut labels);
    }
    Ok(labels)
}
