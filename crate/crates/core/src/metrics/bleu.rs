use super::{ngram_counts, words, MetricError, MAX_ORDER};

/// Sufficient statistics for corpus BLEU; merge freely, score once.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BleuStats {
    /// Clipped matches per order.
    pub matches: [u64; MAX_ORDER],
    /// Hypothesis n-grams per order.
    pub totals: [u64; MAX_ORDER],
    pub hyp_len: u64,
    /// Sum of closest reference lengths.
    pub ref_len: u64,
}

impl BleuStats {
    pub fn add<R: AsRef<str>>(&mut self, hypothesis: &str, references: &[R]) {
        let hyp = words(hypothesis);
        let refs: Vec<Vec<String>> = references.iter().map(|r| words(r.as_ref())).collect();
        self.add_tokens(&hyp, &refs);
    }

    pub fn add_tokens(&mut self, hyp: &[String], refs: &[Vec<String>]) {
        for n in 1..=MAX_ORDER {
            let hyp_counts = ngram_counts(hyp, n);
            let ref_counts: Vec<_> = refs.iter().map(|r| ngram_counts(r, n)).collect();
            for (gram, &count) in &hyp_counts {
                let max_ref = ref_counts
                    .iter()
                    .map(|rc| rc.get(gram).copied().unwrap_or(0))
                    .max()
                    .unwrap_or(0);
                self.matches[n - 1] += count.min(max_ref);
            }
            self.totals[n - 1] += hyp.len().saturating_sub(n - 1) as u64;
        }
        self.hyp_len += hyp.len() as u64;
        // closest reference length, shorter one on ties
        let c = hyp.len() as i64;
        self.ref_len += refs
            .iter()
            .map(|r| r.len() as i64)
            .min_by_key(|&r| ((r - c).abs(), r))
            .unwrap_or(0) as u64;
    }

    pub fn merge(&mut self, other: &BleuStats) {
        for n in 0..MAX_ORDER {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }

    /// Unsmoothed BLEU in [0, 1]; zero whenever some order has no match.
    pub fn score(&self) -> f64 {
        if self.hyp_len == 0 || self.matches.contains(&0) {
            return 0.0;
        }
        let log_precision: f64 = (0..MAX_ORDER)
            .map(|n| (self.matches[n] as f64 / self.totals[n] as f64).ln())
            .sum::<f64>()
            / MAX_ORDER as f64;
        self.brevity_penalty() * log_precision.exp()
    }

    pub fn brevity_penalty(&self) -> f64 {
        if self.hyp_len == 0 {
            0.0
        } else if self.hyp_len < self.ref_len {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        } else {
            1.0
        }
    }
}

/// Corpus-level BLEU with uniform weights over orders 1-4.
pub fn bleu<H: AsRef<str>, R: AsRef<str>>(
    hypotheses: &[H],
    references: &[Vec<R>],
) -> Result<f64, MetricError> {
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
    let mut stats = BleuStats::default();
    for (index, (hyp, refs)) in hypotheses.iter().zip(references).enumerate() {
        if refs.is_empty() {
            return Err(MetricError::EmptyReference { index });
        }
        stats.add(hyp.as_ref(), refs);
    }
    Ok(stats.score())
}

/// Sentence BLEU with add-one smoothing on orders 2-4. Diagnostic only.
pub fn sentence_bleu_smoothed<R: AsRef<str>>(hypothesis: &str, references: &[R]) -> f64 {
    let mut stats = BleuStats::default();
    stats.add(hypothesis, references);
    if stats.hyp_len == 0 || stats.matches[0] == 0 {
        return 0.0;
    }
    let log_precision: f64 = (0..MAX_ORDER)
        .map(|n| {
            let (m, t) = (stats.matches[n] as f64, stats.totals[n] as f64);
            if n == 0 {
                (m / t).ln()
            } else {
                ((m + 1.0) / (t + 1.0)).ln()
            }
        })
        .sum::<f64>()
        / MAX_ORDER as f64;
    stats.brevity_penalty() * log_precision.exp()
}
