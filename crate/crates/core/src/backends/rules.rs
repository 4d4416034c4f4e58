use std::path::Path;

use thiserror::Error;

use super::{BackendError, DetectRequest, Detector, DetectorOutput, Reviser};
use crate::annotation::{canonicalize, AnnotatedText};
use crate::model::{tokenize, AnnotationMode, CharIndex, Intent};

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("cannot read rule file: {0}")]
    Io(#[from] std::io::Error),
    #[error("rule file line {line}: {reason}")]
    ParseError { line: usize, reason: String },
}

/// Labels every occurrence of a token sequence with an intent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectRule {
    pub pattern: Vec<String>,
    pub intent: Intent,
}

/// Inside spans of `intent`, rewrites `pattern` to `replacement`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReviseRule {
    pub intent: Intent,
    pub pattern: String,
    pub replacement: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RuleTable {
    pub detect: Vec<DetectRule>,
    pub revise: Vec<ReviseRule>,
}

/// Parses the line format
///
/// ```text
/// D <TAB> pattern <TAB> intent
/// R <TAB> intent <TAB> pattern <TAB> replacement
/// ```
///
/// Blank lines and lines starting with `#` are skipped. The replacement may
/// be empty; patterns may not.
pub fn parse_rule_table(text: &str) -> Result<RuleTable, RuleError> {
    let mut table = RuleTable::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
            continue;
        }
        let err = |reason: &str| RuleError::ParseError {
            line,
            reason: reason.to_string(),
        };
        let intent = |s: &str| match s.parse::<Intent>() {
            Ok(i) if i.is_edit() => Ok(i),
            _ => Err(err("expected one of clarity, coherence, fluency, style")),
        };
        let fields: Vec<&str> = raw.split('\t').collect();
        match fields.as_slice() {
            ["D", pattern, name] => {
                let pattern: Vec<String> = tokenize(pattern).into_iter().map(|t| t.text).collect();
                if pattern.is_empty() {
                    return Err(err("empty detection pattern"));
                }
                table.detect.push(DetectRule {
                    pattern,
                    intent: intent(name)?,
                });
            }
            ["R", name, pattern, replacement] => {
                if pattern.is_empty() {
                    return Err(err("empty revision pattern"));
                }
                table.revise.push(ReviseRule {
                    intent: intent(name)?,
                    pattern: pattern.to_string(),
                    replacement: replacement.to_string(),
                });
            }
            ["D", ..] => return Err(err("detection rule needs 3 fields")),
            ["R", ..] => return Err(err("revision rule needs 4 fields")),
            _ => return Err(err("line must start with D or R")),
        }
    }
    Ok(table)
}

pub fn load_rule_table(path: impl AsRef<Path>) -> Result<RuleTable, RuleError> {
    parse_rule_table(&std::fs::read_to_string(path)?)
}

/// First matching rule wins: rules are applied in order and a token keeps
/// the first intent it receives.
#[derive(Debug, Clone, Default)]
pub struct RuleDetector {
    rules: Vec<DetectRule>,
}

impl RuleDetector {
    pub fn new(table: &RuleTable) -> Self {
        RuleDetector {
            rules: table.detect.clone(),
        }
    }
}

impl Detector for RuleDetector {
    fn detect(&self, request: &DetectRequest<'_>) -> Result<DetectorOutput, BackendError> {
        let tokens: Vec<String> = tokenize(request.text).into_iter().map(|t| t.text).collect();
        let mut labels = vec![Intent::None; tokens.len()];
        for rule in &self.rules {
            let n = rule.pattern.len();
            if n > tokens.len() {
                continue;
            }
            for start in 0..=tokens.len() - n {
                if tokens[start..start + n] == rule.pattern[..] {
                    for label in &mut labels[start..start + n] {
                        if *label == Intent::None {
                            *label = rule.intent;
                        }
                    }
                }
            }
        }
        let needs_edit = request
            .multi_task
            .then(|| labels.iter().any(|l| l.is_edit()));
        Ok(DetectorOutput { labels, needs_edit })
    }
}

#[derive(Debug, Clone, Default)]
pub struct RuleReviser {
    rules: Vec<ReviseRule>,
}

impl RuleReviser {
    pub fn new(table: &RuleTable) -> Self {
        RuleReviser {
            rules: table.revise.clone(),
        }
    }
}

fn is_word_char(c: Option<char>) -> bool {
    c.is_some_and(char::is_alphanumeric)
}

/// Byte ranges of non-overlapping occurrences of `pattern` in `hay` that do
/// not cut through a word on either side.
fn word_matches(hay: &str, pattern: &str) -> Vec<(usize, usize)> {
    let mut found = Vec::new();
    let mut from = 0;
    while let Some(pos) = hay[from..].find(pattern) {
        let start = from + pos;
        let end = start + pattern.len();
        let left_ok = !(is_word_char(hay[..start].chars().next_back()) && is_word_char(pattern.chars().next()));
        let right_ok = !(is_word_char(hay[end..].chars().next()) && is_word_char(pattern.chars().next_back()));
        if left_ok && right_ok {
            found.push((start, end));
            from = end;
        } else {
            from = start + hay[start..].chars().next().map_or(1, char::len_utf8);
        }
    }
    found
}

impl Reviser for RuleReviser {
    /// For each span, the first rule of the span's intent that occurs in the
    /// span text rewrites all of its occurrences there. Text outside spans is
    /// copied unchanged.
    fn revise(&self, annotated: &AnnotatedText, _mode: AnnotationMode) -> Result<String, BackendError> {
        let plain = &annotated.plain;
        let idx = CharIndex::new(plain);
        let spans = canonicalize(&annotated.spans, idx.len())?;
        let mut out = String::with_capacity(plain.len());
        let mut prev = 0;
        for span in &spans {
            let (start, end) = (idx.byte(span.start), idx.byte(span.end));
            out.push_str(&plain[prev..start]);
            let text = &plain[start..end];
            let hit = self
                .rules
                .iter()
                .filter(|r| r.intent == span.intent)
                .find_map(|r| {
                    let m = word_matches(text, &r.pattern);
                    (!m.is_empty()).then_some((r, m))
                });
            match hit {
                Some((rule, matches)) => {
                    let mut last = 0;
                    for (s, e) in matches {
                        out.push_str(&text[last..s]);
                        out.push_str(&rule.replacement);
                        last = e;
                    }
                    out.push_str(&text[last..]);
                }
                None => out.push_str(text),
            }
            prev = end;
        }
        out.push_str(&plain[prev..]);
        Ok(out)
    }
}
