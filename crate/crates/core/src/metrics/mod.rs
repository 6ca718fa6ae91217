//! Text-overlap evaluation metrics over a deterministic tokenizer.
//!
//! Three scorers are provided, all operating on [`TokenSequence`] values
//! produced by [`tokenize`]:
//!
//! - [`bleu`] — clipped n-gram precision with a brevity penalty, against one
//!   or more references.
//! - [`rouge_l`] — longest-common-subsequence F-measure against a single
//!   reference.
//! - [`meteor`] — unigram-alignment harmonic mean with a fragmentation
//!   penalty, against a single reference.
//!
//! [`evaluate_corpus`] aggregates all of them over a set of pairs, pooling
//! BLEU counts corpus-level (default) or averaging sentence scores.

mod bleu;
mod meteor;
mod report;
mod rouge;
mod tokenize;

pub use bleu::{bleu, BleuParams, BleuResult, Smoothing};
pub use meteor::{meteor, meteor_detailed, MeteorParams, MeteorScore};
pub use report::{evaluate_corpus, Aggregation, EvalPair, MetricParams, MetricReport, PairScores};
pub use rouge::{lcs_length, rouge_l, rouge_l_detailed, RougeParams, RougeScore};
pub use tokenize::{tokenize, TokenSequence};

use thiserror::Error;

/// Errors produced by metric computations.
#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("at least one reference is required")]
    NoReferences,
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("invalid metric parameters: {0}")]
    InvalidParams(String),
}
