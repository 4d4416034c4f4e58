use serde::{Deserialize, Serialize};

use super::{words, MetricError};

/// ROUGE-L precision, recall and F1, each on a 0-100 scale.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

fn score_against(hyp: &[String], reference: &[String]) -> RougeScore {
    let lcs = lcs_len(hyp, reference) as f64;
    if lcs == 0.0 {
        return RougeScore::default();
    }
    let p = lcs / hyp.len() as f64;
    let r = lcs / reference.len() as f64;
    RougeScore {
        precision: 100.0 * p,
        recall: 100.0 * r,
        f: 100.0 * 2.0 * p * r / (p + r),
    }
}

/// Token LCS based ROUGE-L (F with beta = 1). With several references the
/// one giving the highest F is reported.
pub fn rouge_l<R: AsRef<str>>(hypothesis: &str, references: &[R]) -> Result<RougeScore, MetricError> {
    let hyp = words(hypothesis);
    let mut best: Option<RougeScore> = None;
    for r in references {
        let reference = words(r.as_ref());
        if reference.is_empty() {
            return Err(MetricError::EmptyReference { index: 0 });
        }
        let s = score_against(&hyp, &reference);
        if best.is_none_or(|b| s.f > b.f) {
            best = Some(s);
        }
    }
    best.ok_or(MetricError::EmptyReference { index: 0 })
}

/// Mean sentence-level ROUGE-L over a corpus.
pub fn corpus_rouge_l<H: AsRef<str>, R: AsRef<str>>(
    hypotheses: &[H],
    references: &[Vec<R>],
) -> Result<RougeScore, MetricError> {
    if hypotheses.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    if hypotheses.len() != references.len() {
        return Err(MetricError::ShapeMismatch {
            what: "references",
            expected: hypotheses.len(),
            got: references.len(),
        });
    }
    let mut sum = RougeScore::default();
    for (index, (h, refs)) in hypotheses.iter().zip(references).enumerate() {
        let s = rouge_l(h.as_ref(), refs).map_err(|_| MetricError::EmptyReference { index })?;
        sum.precision += s.precision;
        sum.recall += s.recall;
        sum.f += s.f;
    }
    let n = hypotheses.len() as f64;
    Ok(RougeScore {
        precision: sum.precision / n,
        recall: sum.recall / n,
        f: sum.f / n,
    })
}
