//! Evaluation metrics: corpus BLEU (0-1 scale), ROUGE-L and SARI (0-100),
//! and token-level intent F1 for detectors.
//!
//! All text metrics work on the tokens produced by [`crate::model::tokenize`].

mod bleu;
mod f1;
mod rouge;
mod sari;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bleu::{bleu, sentence_bleu_smoothed, BleuStats};
pub use f1::{token_f1, ClassScore, F1Report};
pub use rouge::{corpus_rouge_l, rouge_l, RougeScore};
pub use sari::{corpus_sari, sari, SariBreakdown};

use crate::model::tokenize;

/// Highest n-gram order used by BLEU and SARI.
pub const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("no usable reference for item {index}")]
    EmptyReference { index: usize },
    #[error("{what}: expected {expected} items, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

/// One line of a score report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreLine {
    pub metric: String,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breakdown: Option<serde_json::Value>,
}

pub(crate) fn words(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.text).collect()
}

pub(crate) type NgramCounts<'a> = HashMap<&'a [String], u64>;

pub(crate) fn ngram_counts(tokens: &[String], n: usize) -> NgramCounts<'_> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Headline corpus scores: BLEU on 0-1, ROUGE-L F and SARI on 0-100.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusScores {
    pub bleu: f64,
    pub rouge_l: f64,
    pub sari: f64,
}

/// BLEU, mean ROUGE-L F and mean SARI of `hypotheses` over a corpus.
pub fn corpus_scores<S: AsRef<str>, H: AsRef<str>, R: AsRef<str>>(
    sources: &[S],
    hypotheses: &[H],
    references: &[Vec<R>],
) -> Result<CorpusScores, MetricError> {
    Ok(CorpusScores {
        bleu: bleu(hypotheses, references)?,
        rouge_l: corpus_rouge_l(hypotheses, references)?.f,
        sari: corpus_sari(sources, hypotheses, references)?.score,
    })
}
