//! Longest-common-subsequence F-measure.

use serde::{Deserialize, Serialize};

use super::{MetricsError, TokenSequence};

/// Parameters for [`rouge_l`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RougeParams {
    /// Recall weighting factor; 1 weights precision and recall equally.
    pub beta: f64,
}

impl Default for RougeParams {
    fn default() -> Self {
        RougeParams { beta: 1.0 }
    }
}

/// Score breakdown returned by [`rouge_l_detailed`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RougeScore {
    pub score: f64,
    pub lcs: usize,
    pub precision: f64,
    pub recall: f64,
}

/// F-measure over the longest common subsequence of candidate and reference.
///
/// Precision is `LCS / |candidate|` and recall `LCS / |reference|`; the
/// result is `(1 + beta^2) P R / (beta^2 P + R)`. Returns 0 when either
/// sequence is empty or nothing is shared.
pub fn rouge_l(
    candidate: &TokenSequence,
    reference: &TokenSequence,
    params: &RougeParams,
) -> Result<f64, MetricsError> {
    rouge_l_detailed(candidate, reference, params).map(|s| s.score)
}

pub fn rouge_l_detailed(
    candidate: &TokenSequence,
    reference: &TokenSequence,
    params: &RougeParams,
) -> Result<RougeScore, MetricsError> {
    if !(params.beta > 0.0) {
        return Err(MetricsError::InvalidParams(format!(
            "beta must be positive, got {}",
            params.beta
        )));
    }
    let zero = RougeScore {
        score: 0.0,
        lcs: 0,
        precision: 0.0,
        recall: 0.0,
    };
    if candidate.is_empty() || reference.is_empty() {
        return Ok(zero);
    }
    let lcs = lcs_length(candidate.tokens(), reference.tokens());
    if lcs == 0 {
        return Ok(zero);
    }
    let precision = lcs as f64 / candidate.len() as f64;
    let recall = lcs as f64 / reference.len() as f64;
    let b2 = params.beta * params.beta;
    let score = (1.0 + b2) * precision * recall / (b2 * precision + recall);
    Ok(RougeScore {
        score,
        lcs,
        precision,
        recall,
    })
}

/// Length of the longest common subsequence, by dynamic programming over a
/// rolling pair of rows.
pub fn lcs_length<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut curr = vec![0usize; b.len() + 1];
    for item_a in a {
        for (j, item_b) in b.iter().enumerate() {
            curr[j + 1] = if item_a == item_b {
                prev[j] + 1
            } else {
                prev[j + 1].max(curr[j])
            };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(words: &[&str]) -> TokenSequence {
        TokenSequence::from_words(words)
    }

    #[test]
    fn transposed_middle_pair() {
        let score = rouge_l(
            &seq(&["a", "b", "c", "d"]),
            &seq(&["a", "c", "b", "d"]),
            &RougeParams::default(),
        )
        .unwrap();
        assert!((score - 0.75).abs() < 1e-12);
    }

    #[test]
    fn identical_sequences_score_one() {
        let s = seq(&["no", "pleural", "effusion"]);
        assert_eq!(rouge_l(&s, &s, &RougeParams::default()).unwrap(), 1.0);
    }

    #[test]
    fn disjoint_vocabularies_score_zero() {
        let score = rouge_l(
            &seq(&["a", "b"]),
            &seq(&["c", "d"]),
            &RougeParams::default(),
        )
        .unwrap();
        assert_eq!(score, 0.0);
    }

    #[test]
    fn empty_sequences_score_zero() {
        let empty = TokenSequence::default();
        let s = seq(&["a"]);
        assert_eq!(rouge_l(&empty, &s, &RougeParams::default()).unwrap(), 0.0);
        assert_eq!(rouge_l(&s, &empty, &RougeParams::default()).unwrap(), 0.0);
        assert_eq!(
            rouge_l(&empty, &empty, &RougeParams::default()).unwrap(),
            0.0
        );
    }

    #[test]
    fn lcs_examples() {
        assert_eq!(lcs_length(b"ABCDGH", b"AEDFHR"), 3);
        assert_eq!(lcs_length::<u8>(b"", b"ABC"), 0);
        assert_eq!(lcs_length(b"ABC", b"ABC"), 3);
    }

    #[test]
    fn detailed_exposes_precision_and_recall() {
        let detail = rouge_l_detailed(
            &seq(&["a", "b"]),
            &seq(&["a", "b", "c", "d"]),
            &RougeParams::default(),
        )
        .unwrap();
        assert_eq!(detail.lcs, 2);
        assert_eq!(detail.precision, 1.0);
        assert_eq!(detail.recall, 0.5);
    }

    #[test]
    fn nonpositive_beta_is_rejected() {
        let s = seq(&["a"]);
        assert!(rouge_l(&s, &s, &RougeParams { beta: 0.0 }).is_err());
    }
}
