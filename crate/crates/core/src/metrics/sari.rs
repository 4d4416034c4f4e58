use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{ngram_counts, words, MetricError, NgramCounts, MAX_ORDER};

/// Per-order SARI components and the combined score, all on a 0-100 scale.
///
/// `max_order` is the number of n-gram orders that exist in at least one of
/// the source, hypothesis or references; `score` averages over those orders
/// only, so short inputs are not penalised for lacking 4-grams.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SariBreakdown {
    pub add_f: [f64; MAX_ORDER],
    pub keep_f: [f64; MAX_ORDER],
    pub del_p: [f64; MAX_ORDER],
    pub max_order: usize,
    #[serde(rename = "final")]
    pub score: f64,
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// (keep F1, deletion precision, addition F1) for one order, each in [0, 1].
///
/// Source and hypothesis counts are scaled by the number of references so
/// that reference counts (summed over references) are comparable; keep and
/// deletion use these fractional counts, addition uses n-gram sets.
fn order_components(
    src: &NgramCounts<'_>,
    hyp: &NgramCounts<'_>,
    refs: &NgramCounts<'_>,
    num_refs: u64,
) -> (f64, f64, f64) {
    let r = |g: &[String]| refs.get(g).copied().unwrap_or(0);
    let c = |g: &[String]| hyp.get(g).copied().unwrap_or(0) * num_refs;

    // keep
    let (mut keep_p_sum, mut keep_n) = (0.0, 0usize);
    let (mut keep_r_sum, mut keep_all_n) = (0.0, 0usize);
    // deletion
    let (mut del_p_sum, mut del_n) = (0.0, 0usize);
    for (&g, &count) in src {
        let s = count * num_refs;
        let kept = s.min(c(g));
        if kept > 0 {
            keep_p_sum += kept.min(r(g)) as f64 / kept as f64;
            keep_n += 1;
        }
        let all = s.min(r(g));
        if all > 0 {
            keep_r_sum += kept.min(r(g)) as f64 / all as f64;
            keep_all_n += 1;
        }
        let deleted = s.saturating_sub(c(g));
        if deleted > 0 {
            del_p_sum += deleted.min(s.saturating_sub(r(g))) as f64 / deleted as f64;
            del_n += 1;
        }
    }
    let keep_p = if keep_n > 0 { keep_p_sum / keep_n as f64 } else { 0.0 };
    let keep_r = if keep_all_n > 0 { keep_r_sum / keep_all_n as f64 } else { 0.0 };
    let del_p = if del_n > 0 { del_p_sum / del_n as f64 } else { 0.0 };

    // addition, over sets
    let added: HashSet<&[String]> = hyp.keys().copied().filter(|g| !src.contains_key(g)).collect();
    let wanted: HashSet<&[String]> = refs.keys().copied().filter(|g| !src.contains_key(g)).collect();
    let good = added.intersection(&wanted).count() as f64;
    let add_p = if added.is_empty() { 0.0 } else { good / added.len() as f64 };
    let add_r = if wanted.is_empty() { 0.0 } else { good / wanted.len() as f64 };

    (f1(keep_p, keep_r), del_p, f1(add_p, add_r))
}

/// Sentence-level SARI of `hypothesis` as an edit of `source`.
pub fn sari<R: AsRef<str>>(
    source: &str,
    hypothesis: &str,
    references: &[R],
) -> Result<SariBreakdown, MetricError> {
    if references.is_empty() {
        return Err(MetricError::EmptyReference { index: 0 });
    }
    let src = words(source);
    let hyp = words(hypothesis);
    let refs: Vec<Vec<String>> = references.iter().map(|r| words(r.as_ref())).collect();
    Ok(sari_tokens(&src, &hyp, &refs))
}

pub(crate) fn sari_tokens(src: &[String], hyp: &[String], refs: &[Vec<String>]) -> SariBreakdown {
    let longest = refs
        .iter()
        .map(Vec::len)
        .chain([src.len(), hyp.len()])
        .max()
        .unwrap_or(0);
    let max_order = longest.min(MAX_ORDER);
    let mut out = SariBreakdown {
        max_order,
        ..SariBreakdown::default()
    };
    for n in 1..=max_order {
        let src_counts = ngram_counts(src, n);
        let hyp_counts = ngram_counts(hyp, n);
        let mut ref_counts = NgramCounts::new();
        for r in refs {
            for (g, k) in ngram_counts(r, n) {
                *ref_counts.entry(g).or_insert(0) += k;
            }
        }
        let (keep, del, add) = order_components(&src_counts, &hyp_counts, &ref_counts, refs.len() as u64);
        out.keep_f[n - 1] = 100.0 * keep;
        out.del_p[n - 1] = 100.0 * del;
        out.add_f[n - 1] = 100.0 * add;
    }
    if max_order > 0 {
        let total: f64 = (0..max_order)
            .map(|k| (out.add_f[k] + out.keep_f[k] + out.del_p[k]) / 3.0)
            .sum();
        out.score = total / max_order as f64;
    }
    out
}

/// Mean of sentence-level SARI over a corpus, component by component.
pub fn corpus_sari<S: AsRef<str>, H: AsRef<str>, R: AsRef<str>>(
    sources: &[S],
    hypotheses: &[H],
    references: &[Vec<R>],
) -> Result<SariBreakdown, MetricError> {
    if sources.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    for (what, got) in [("hypotheses", hypotheses.len()), ("references", references.len())] {
        if got != sources.len() {
            return Err(MetricError::ShapeMismatch {
                what,
                expected: sources.len(),
                got,
            });
        }
    }
    let mut sum = SariBreakdown::default();
    for (index, ((s, h), refs)) in sources.iter().zip(hypotheses).zip(references).enumerate() {
        let b = sari(s.as_ref(), h.as_ref(), refs).map_err(|_| MetricError::EmptyReference { index })?;
        for k in 0..MAX_ORDER {
            sum.add_f[k] += b.add_f[k];
            sum.keep_f[k] += b.keep_f[k];
            sum.del_p[k] += b.del_p[k];
        }
        sum.max_order = sum.max_order.max(b.max_order);
        sum.score += b.score;
    }
    let n = sources.len() as f64;
    for k in 0..MAX_ORDER {
        sum.add_f[k] /= n;
        sum.keep_f[k] /= n;
        sum.del_p[k] /= n;
    }
    sum.score /= n;
    Ok(sum)
}
