//! Corpus evaluation: per-pair scores plus pooled or averaged aggregates.

use serde::{Deserialize, Serialize};

use super::bleu::{brevity_penalty, clipped_ngram_stats, closest_reference_len, combine};
use super::{
    bleu, meteor, rouge_l, BleuParams, MeteorParams, MetricsError, RougeParams, Smoothing,
    TokenSequence,
};

/// How top-level scores are aggregated over the pair set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// BLEU pools clipped counts and lengths across pairs before scoring;
    /// ROUGE-L and METEOR average sentence scores.
    #[default]
    Corpus,
    /// Every metric is the mean of its sentence-level scores.
    SentenceAverage,
}

/// One candidate with its reference set.
///
/// BLEU uses every reference; ROUGE-L and METEOR score against the first.
#[derive(Debug, Clone)]
pub struct EvalPair {
    pub id: Option<String>,
    pub candidate: TokenSequence,
    pub references: Vec<TokenSequence>,
}

/// Parameter bundle for [`evaluate_corpus`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MetricParams {
    pub smoothing: Smoothing,
    pub rouge: RougeParams,
    pub meteor: MeteorParams,
}

/// Sentence-level scores for a single pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairScores {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu3: f64,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub meteor: f64,
}

/// Aggregated metric scores over a pair set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu3: f64,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub meteor: f64,
    pub pair_count: usize,
    pub pairs: Vec<PairScores>,
}

/// Scores every pair and aggregates.
///
/// Top-level `bleu1..bleu4` are BLEU-N with uniform weights for N = 1..4; in
/// corpus mode the clipped counts and lengths are pooled over all pairs
/// before applying the scoring formula, so a pair with no 4-gram overlap
/// does not zero the corpus score.
pub fn evaluate_corpus(
    pairs: &[EvalPair],
    params: &MetricParams,
    mode: Aggregation,
) -> Result<MetricReport, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }

    let mut pair_scores = Vec::with_capacity(pairs.len());
    // Pooled per-order counts plus candidate/reference lengths.
    let mut pooled = [(0usize, 0usize); 4];
    let mut pooled_c = 0usize;
    let mut pooled_r = 0usize;

    for pair in pairs {
        if pair.references.is_empty() {
            return Err(MetricsError::NoReferences);
        }
        let mut sentence_bleu = [0.0f64; 4];
        for n in 1..=4 {
            let mut p = BleuParams::uniform(n);
            p.smoothing = params.smoothing;
            sentence_bleu[n - 1] = bleu(&pair.candidate, &pair.references, &p)?.score;
            let (matched, total) = clipped_ngram_stats(&pair.candidate, &pair.references, n);
            pooled[n - 1].0 += matched;
            pooled[n - 1].1 += total;
        }
        pooled_c += pair.candidate.len();
        pooled_r += closest_reference_len(pair.candidate.len(), &pair.references);

        let rouge = rouge_l(&pair.candidate, &pair.references[0], &params.rouge)?;
        let met = meteor(&pair.candidate, &pair.references[0], &params.meteor)?;
        pair_scores.push(PairScores {
            id: pair.id.clone(),
            bleu1: sentence_bleu[0],
            bleu2: sentence_bleu[1],
            bleu3: sentence_bleu[2],
            bleu4: sentence_bleu[3],
            rouge_l: rouge,
            meteor: met,
        });
    }

    let n_pairs = pair_scores.len();
    let mean = |f: &dyn Fn(&PairScores) -> f64| -> f64 {
        pair_scores.iter().map(|p| f(p)).sum::<f64>() / n_pairs as f64
    };

    let bleu_agg: [f64; 4] = match mode {
        Aggregation::Corpus => {
            let bp = brevity_penalty(pooled_c, pooled_r);
            let precisions: Vec<f64> = pooled
                .iter()
                .map(|&(m, t)| if t == 0 { 0.0 } else { m as f64 / t as f64 })
                .collect();
            let mut out = [0.0f64; 4];
            for n in 1..=4 {
                let weights = vec![1.0 / n as f64; n];
                out[n - 1] = combine(
                    &precisions[..n],
                    &pooled[..n],
                    &weights,
                    bp,
                    params.smoothing,
                );
            }
            out
        }
        Aggregation::SentenceAverage => [
            mean(&|p| p.bleu1),
            mean(&|p| p.bleu2),
            mean(&|p| p.bleu3),
            mean(&|p| p.bleu4),
        ],
    };

    Ok(MetricReport {
        bleu1: bleu_agg[0],
        bleu2: bleu_agg[1],
        bleu3: bleu_agg[2],
        bleu4: bleu_agg[3],
        rouge_l: mean(&|p| p.rouge_l),
        meteor: mean(&|p| p.meteor),
        pair_count: n_pairs,
        pairs: pair_scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(words: &[&str]) -> TokenSequence {
        TokenSequence::from_words(words)
    }

    fn pair(c: &[&str], r: &[&str]) -> EvalPair {
        EvalPair {
            id: None,
            candidate: seq(c),
            references: vec![seq(r)],
        }
    }

    #[test]
    fn single_pair_matches_sentence_scores() {
        let p = pair(&["a", "b", "c", "d"], &["a", "b", "x", "d"]);
        let report =
            evaluate_corpus(&[p.clone()], &MetricParams::default(), Aggregation::Corpus).unwrap();
        assert_eq!(report.pair_count, 1);
        assert_eq!(report.bleu1, report.pairs[0].bleu1);
        assert_eq!(report.bleu4, report.pairs[0].bleu4);
        assert_eq!(report.rouge_l, report.pairs[0].rouge_l);
        assert_eq!(report.meteor, report.pairs[0].meteor);
    }

    #[test]
    fn identity_pairs_score_one_everywhere_bleu() {
        let p1 = pair(&["a", "b", "c", "d"], &["a", "b", "c", "d"]);
        let p2 = pair(&["x", "y", "z", "w", "v"], &["x", "y", "z", "w", "v"]);
        let report =
            evaluate_corpus(&[p1, p2], &MetricParams::default(), Aggregation::Corpus).unwrap();
        assert_eq!(
            [report.bleu1, report.bleu2, report.bleu3, report.bleu4],
            [1.0; 4]
        );
        assert_eq!(report.rouge_l, 1.0);
    }

    #[test]
    fn count_pooling_keeps_corpus_bleu4_positive() {
        // Second pair has zero 4-gram overlap; pooled counts still do.
        let good = pair(&["a", "b", "c", "d", "e"], &["a", "b", "c", "d", "e"]);
        let bad = pair(&["p", "q", "r", "s"], &["p", "x", "q", "y"]);
        let corpus = evaluate_corpus(
            &[good.clone(), bad.clone()],
            &MetricParams::default(),
            Aggregation::Corpus,
        )
        .unwrap();
        assert!(corpus.bleu4 > 0.0);
        assert_eq!(corpus.pairs[1].bleu4, 0.0);

        let averaged = evaluate_corpus(
            &[good, bad],
            &MetricParams::default(),
            Aggregation::SentenceAverage,
        )
        .unwrap();
        assert!(averaged.bleu4 < corpus.bleu4);
    }

    #[test]
    fn empty_pair_list_is_an_error() {
        assert!(matches!(
            evaluate_corpus(&[], &MetricParams::default(), Aggregation::Corpus),
            Err(MetricsError::EmptyCorpus)
        ));
    }

    #[test]
    fn report_serializes_with_stable_keys() {
        let p = pair(&["a"], &["a"]);
        let report = evaluate_corpus(&[p], &MetricParams::default(), Aggregation::Corpus).unwrap();
        let json = serde_json::to_value(&report).unwrap();
        for key in ["bleu1", "bleu2", "bleu3", "bleu4", "rouge_l", "meteor", "pair_count", "pairs"]
        {
            assert!(json.get(key).is_some(), "missing key {key}");
        }
    }
}
