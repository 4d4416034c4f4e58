use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::model::Intent;

/// Token counts and scores (0-100) for one class or for the pooled set.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassScore {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ClassScore {
    fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        // nothing gold and nothing predicted is a perfect (vacuous) result
        if tp + fp + fn_ == 0 {
            return ClassScore {
                precision: 100.0,
                recall: 100.0,
                f1: 100.0,
                ..ClassScore::default()
            };
        }
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        ClassScore {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }
}

/// Per-intent and pooled ("overall") token-level detection scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub per_intent: BTreeMap<Intent, ClassScore>,
    pub overall: ClassScore,
}

/// Token-level micro precision/recall/F1 for each edit intent. `None` is not
/// a scored class; the overall score pools the counts of the four intents.
pub fn token_f1(gold: &[Vec<Intent>], pred: &[Vec<Intent>]) -> Result<F1Report, MetricError> {
    if gold.len() != pred.len() {
        return Err(MetricError::ShapeMismatch {
            what: "sequences",
            expected: gold.len(),
            got: pred.len(),
        });
    }
    let mut counts: BTreeMap<Intent, (u64, u64, u64)> =
        Intent::EDIT_INTENTS.iter().map(|&i| (i, (0, 0, 0))).collect();
    for (g_seq, p_seq) in gold.iter().zip(pred) {
        if g_seq.len() != p_seq.len() {
            return Err(MetricError::ShapeMismatch {
                what: "labels",
                expected: g_seq.len(),
                got: p_seq.len(),
            });
        }
        for (&g, &p) in g_seq.iter().zip(p_seq) {
            if g == p {
                if let Some(c) = counts.get_mut(&g) {
                    c.0 += 1;
                }
                continue;
            }
            if let Some(c) = counts.get_mut(&p) {
                c.1 += 1;
            }
            if let Some(c) = counts.get_mut(&g) {
                c.2 += 1;
            }
        }
    }
    let (tp, fp, fn_) = counts
        .values()
        .fold((0, 0, 0), |acc, c| (acc.0 + c.0, acc.1 + c.1, acc.2 + c.2));
    Ok(F1Report {
        per_intent: counts
            .into_iter()
            .map(|(i, (tp, fp, fn_))| (i, ClassScore::from_counts(tp, fp, fn_)))
            .collect(),
        overall: ClassScore::from_counts(tp, fp, fn_),
    })
}
