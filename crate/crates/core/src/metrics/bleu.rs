//! Clipped n-gram precision scoring with a brevity penalty.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{MetricsError, TokenSequence};

/// Zero-precision handling at scoring time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Smoothing {
    /// Any zero precision forces the score to 0.
    #[default]
    None,
    /// Zero precisions are replaced by 1e-9 before the geometric mean.
    Epsilon,
}

const SMOOTHING_EPSILON: f64 = 1e-9;

/// Parameters for [`bleu`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BleuParams {
    /// Highest n-gram order scored.
    pub max_n: usize,
    /// Per-order weights; must have `max_n` entries summing to 1.
    pub weights: Vec<f64>,
    pub smoothing: Smoothing,
}

impl BleuParams {
    /// Uniform weights `1/max_n` for each order, no smoothing.
    pub fn uniform(max_n: usize) -> Self {
        BleuParams {
            max_n,
            weights: vec![1.0 / max_n as f64; max_n],
            smoothing: Smoothing::None,
        }
    }

    fn validate(&self) -> Result<(), MetricsError> {
        if self.max_n == 0 {
            return Err(MetricsError::InvalidParams("max_n must be >= 1".into()));
        }
        if self.weights.len() != self.max_n {
            return Err(MetricsError::InvalidParams(format!(
                "expected {} weights, got {}",
                self.max_n,
                self.weights.len()
            )));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(MetricsError::InvalidParams(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }
}

impl Default for BleuParams {
    fn default() -> Self {
        BleuParams::uniform(4)
    }
}

/// Score breakdown returned by [`bleu`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BleuResult {
    pub score: f64,
    pub brevity_penalty: f64,
    /// Clipped precision per order, `precisions[n-1]` for n-grams.
    pub precisions: Vec<f64>,
    pub candidate_len: usize,
    pub reference_len: usize,
}

/// Scores a candidate against one or more references.
///
/// Precisions use clipped (modified) counts: each candidate n-gram counts at
/// most as often as its maximum count in any single reference. The effective
/// reference length is the one closest to the candidate length (shorter wins
/// ties). Orders for which the candidate has no n-grams at all are dropped
/// and the remaining weights renormalized, so an identical pair scores 1
/// regardless of its length.
pub fn bleu(
    candidate: &TokenSequence,
    references: &[TokenSequence],
    params: &BleuParams,
) -> Result<BleuResult, MetricsError> {
    params.validate()?;
    if references.is_empty() {
        return Err(MetricsError::NoReferences);
    }

    let c = candidate.len();
    let r = closest_reference_len(c, references);
    let bp = brevity_penalty(c, r);

    let mut precisions = Vec::with_capacity(params.max_n);
    let mut stats = Vec::with_capacity(params.max_n);
    for n in 1..=params.max_n {
        let (matched, total) = clipped_ngram_stats(candidate, references, n);
        precisions.push(if total == 0 {
            0.0
        } else {
            matched as f64 / total as f64
        });
        stats.push((matched, total));
    }

    let score = combine(&precisions, &stats, &params.weights, bp, params.smoothing);
    Ok(BleuResult {
        score,
        brevity_penalty: bp,
        precisions,
        candidate_len: c,
        reference_len: r,
    })
}

/// Geometric combination shared by sentence and corpus scoring.
///
/// `stats[n-1]` carries (matched, total) so orders with `total == 0` can be
/// excluded; their weight is redistributed over the remaining orders.
pub(super) fn combine(
    precisions: &[f64],
    stats: &[(usize, usize)],
    weights: &[f64],
    bp: f64,
    smoothing: Smoothing,
) -> f64 {
    let mut weight_sum = 0.0;
    let mut log_sum = 0.0;
    for ((p, &(_, total)), w) in precisions.iter().zip(stats).zip(weights) {
        if total == 0 {
            continue;
        }
        let p = match (smoothing, *p) {
            (Smoothing::None, p) if p == 0.0 => return 0.0,
            (Smoothing::Epsilon, p) if p == 0.0 => SMOOTHING_EPSILON,
            (_, p) => p,
        };
        weight_sum += w;
        log_sum += w * p.ln();
    }
    if weight_sum == 0.0 {
        // No order had any candidate n-grams: an empty candidate.
        return 0.0;
    }
    bp * (log_sum / weight_sum).exp()
}

/// Clipped match count and candidate total for one n-gram order.
pub(super) fn clipped_ngram_stats(
    candidate: &TokenSequence,
    references: &[TokenSequence],
    n: usize,
) -> (usize, usize) {
    let cand_counts = ngram_counts(candidate.tokens(), n);
    if cand_counts.is_empty() {
        return (0, 0);
    }
    let mut ref_max: HashMap<&[String], usize> = HashMap::new();
    for reference in references {
        for (gram, count) in ngram_counts(reference.tokens(), n) {
            let entry = ref_max.entry(gram).or_insert(0);
            *entry = (*entry).max(count);
        }
    }
    let mut matched = 0;
    let mut total = 0;
    for (gram, count) in cand_counts {
        total += count;
        if let Some(&limit) = ref_max.get(gram) {
            matched += count.min(limit);
        }
    }
    (matched, total)
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Reference length closest to the candidate length; ties go to the shorter.
pub(super) fn closest_reference_len(c: usize, references: &[TokenSequence]) -> usize {
    references
        .iter()
        .map(TokenSequence::len)
        .min_by_key(|&len| (len.abs_diff(c), len))
        .unwrap_or(0)
}

pub(super) fn brevity_penalty(c: usize, r: usize) -> f64 {
    if c == 0 {
        // Convention for an empty candidate: fully penalized unless the
        // reference is empty too.
        if r == 0 {
            1.0
        } else {
            0.0
        }
    } else if c > r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(words: &[&str]) -> TokenSequence {
        TokenSequence::from_words(words)
    }

    #[test]
    fn matching_prefix_takes_only_the_brevity_penalty() {
        let cand = seq(&["the", "lungs", "are", "clear"]);
        let reference = seq(&["the", "lungs", "are", "clear", "and", "normal"]);
        let result = bleu(&cand, &[reference], &BleuParams::default()).unwrap();
        assert_eq!(result.precisions, vec![1.0, 1.0, 1.0, 1.0]);
        assert_eq!(result.candidate_len, 4);
        assert_eq!(result.reference_len, 6);
        let expected_bp = (1.0_f64 - 6.0 / 4.0).exp();
        assert!((result.brevity_penalty - expected_bp).abs() < 1e-12);
        assert!((result.score - expected_bp).abs() < 1e-12);
        assert!((result.score - 0.6065306597).abs() < 1e-9);
    }

    #[test]
    fn identical_pair_scores_one() {
        let cand = seq(&["no", "acute", "disease", "."]);
        let result = bleu(&cand, &[cand.clone()], &BleuParams::default()).unwrap();
        assert_eq!(result.score, 1.0);
        assert_eq!(result.brevity_penalty, 1.0);
    }

    #[test]
    fn short_identical_pair_still_scores_one() {
        // Orders longer than the candidate are dropped, not zeroed.
        let cand = seq(&["heart", "normal"]);
        let result = bleu(&cand, &[cand.clone()], &BleuParams::default()).unwrap();
        assert_eq!(result.score, 1.0);
    }

    #[test]
    fn repeated_tokens_are_clipped() {
        let cand = seq(&["the", "the", "the", "the"]);
        let reference = seq(&["the", "lungs"]);
        let result = bleu(&cand, &[reference], &BleuParams::uniform(1)).unwrap();
        assert!((result.precisions[0] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn empty_candidate_scores_zero() {
        let cand = TokenSequence::default();
        let reference = seq(&["a", "b"]);
        let result = bleu(&cand, &[reference], &BleuParams::default()).unwrap();
        assert_eq!(result.score, 0.0);
        assert_eq!(result.brevity_penalty, 0.0);
        assert_eq!(result.candidate_len, 0);
    }

    #[test]
    fn zero_order_overlap_scores_zero_without_smoothing() {
        let cand = seq(&["a", "b", "c", "d"]);
        let reference = seq(&["a", "x", "b", "y"]);
        let plain = bleu(&cand, &[reference.clone()], &BleuParams::default()).unwrap();
        assert_eq!(plain.score, 0.0);

        let mut params = BleuParams::default();
        params.smoothing = Smoothing::Epsilon;
        let smoothed = bleu(&cand, &[reference], &params).unwrap();
        assert!(smoothed.score > 0.0);
    }

    #[test]
    fn closest_reference_length_breaks_ties_short() {
        let cand = seq(&["a", "b", "c"]);
        let refs = [seq(&["a", "b"]), seq(&["a", "b", "c", "d"])];
        let result = bleu(&cand, &refs, &BleuParams::default()).unwrap();
        assert_eq!(result.reference_len, 2);
    }

    #[test]
    fn multiple_references_clip_per_gram_maximum() {
        let cand = seq(&["a", "a", "b"]);
        let refs = [seq(&["a", "a"]), seq(&["b"])];
        let (matched, total) = clipped_ngram_stats(&cand, &refs, 1);
        assert_eq!((matched, total), (3, 3));
    }

    #[test]
    fn no_references_is_an_error() {
        let cand = seq(&["a"]);
        assert!(matches!(
            bleu(&cand, &[], &BleuParams::default()),
            Err(MetricsError::NoReferences)
        ));
    }

    #[test]
    fn invalid_weights_are_rejected() {
        let params = BleuParams {
            max_n: 2,
            weights: vec![0.9, 0.9],
            smoothing: Smoothing::None,
        };
        let cand = seq(&["a"]);
        assert!(matches!(
            bleu(&cand, &[cand.clone()], &params),
            Err(MetricsError::InvalidParams(_))
        ));
    }
}
