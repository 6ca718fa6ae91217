//! Unigram-alignment score with a fragmentation penalty.
//!
//! Matching is exact surface match only (no stemming or synonymy). The
//! aligner maximizes the number of matched unigrams and, among maximal
//! matchings, minimizes the number of chunks, where a chunk is a maximal run
//! of matches that is contiguous and identically ordered in both sequences.
//!
//! Chunk minimization is exact (branch-and-bound over matchings) when both
//! sequences have at most [`EXACT_SEARCH_LIMIT`] tokens and the search stays
//! within its node budget; longer inputs fall back to greedy
//! longest-common-run matching, which still yields a maximal matching but
//! may overcount chunks.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use super::{MetricsError, TokenSequence};

/// Above this length (either side), only the greedy aligner runs.
pub const EXACT_SEARCH_LIMIT: usize = 50;

const SEARCH_NODE_BUDGET: usize = 200_000;

/// Parameters for [`meteor`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MeteorParams {
    /// Precision weight in the harmonic mean, in (0, 1).
    pub alpha: f64,
    /// Fragmentation penalty scale, in [0, 1].
    pub gamma: f64,
    /// Fragmentation penalty exponent.
    pub frag_beta: f64,
}

impl Default for MeteorParams {
    fn default() -> Self {
        MeteorParams {
            alpha: 0.9,
            gamma: 0.5,
            frag_beta: 3.0,
        }
    }
}

impl MeteorParams {
    fn validate(&self) -> Result<(), MetricsError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(MetricsError::InvalidParams(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(MetricsError::InvalidParams(format!(
                "gamma must lie in [0, 1], got {}",
                self.gamma
            )));
        }
        if !(self.frag_beta >= 0.0) {
            return Err(MetricsError::InvalidParams(format!(
                "frag_beta must be nonnegative, got {}",
                self.frag_beta
            )));
        }
        Ok(())
    }
}

/// Score breakdown returned by [`meteor_detailed`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MeteorScore {
    pub score: f64,
    pub matches: usize,
    pub chunks: usize,
    pub precision: f64,
    pub recall: f64,
    pub fmean: f64,
    pub penalty: f64,
}

pub fn meteor(
    candidate: &TokenSequence,
    reference: &TokenSequence,
    params: &MeteorParams,
) -> Result<f64, MetricsError> {
    meteor_detailed(candidate, reference, params).map(|s| s.score)
}

pub fn meteor_detailed(
    candidate: &TokenSequence,
    reference: &TokenSequence,
    params: &MeteorParams,
) -> Result<MeteorScore, MetricsError> {
    params.validate()?;
    let (matches, chunks) = align(candidate.tokens(), reference.tokens());
    if matches == 0 {
        return Ok(MeteorScore {
            score: 0.0,
            matches: 0,
            chunks: 0,
            precision: 0.0,
            recall: 0.0,
            fmean: 0.0,
            penalty: 0.0,
        });
    }
    let precision = matches as f64 / candidate.len() as f64;
    let recall = matches as f64 / reference.len() as f64;
    let fmean =
        precision * recall / (params.alpha * precision + (1.0 - params.alpha) * recall);
    let penalty = params.gamma * (chunks as f64 / matches as f64).powf(params.frag_beta);
    Ok(MeteorScore {
        score: fmean * (1.0 - penalty),
        matches,
        chunks,
        precision,
        recall,
        fmean,
        penalty,
    })
}

/// Returns (matched unigrams, chunk count) for the chosen alignment.
fn align(cand: &[String], refr: &[String]) -> (usize, usize) {
    let max_matches = max_match_count(cand, refr);
    if max_matches == 0 {
        return (0, 0);
    }
    let (greedy_matches, greedy_chunks) = greedy_align(cand, refr);
    debug_assert_eq!(greedy_matches, max_matches);
    if greedy_chunks <= 1 || cand.len() > EXACT_SEARCH_LIMIT || refr.len() > EXACT_SEARCH_LIMIT {
        return (max_matches, greedy_chunks);
    }
    let best = min_chunks_exact(cand, refr, max_matches, greedy_chunks);
    (max_matches, best)
}

/// Any maximal matching pairs each word type min(candidate count, reference
/// count) times, so the maximum matching size is that sum.
fn max_match_count(cand: &[String], refr: &[String]) -> usize {
    let mut cand_counts: HashMap<&str, usize> = HashMap::new();
    for t in cand {
        *cand_counts.entry(t).or_insert(0) += 1;
    }
    let mut ref_counts: HashMap<&str, usize> = HashMap::new();
    for t in refr {
        *ref_counts.entry(t).or_insert(0) += 1;
    }
    cand_counts
        .iter()
        .map(|(t, c)| c.min(ref_counts.get(t.to_owned()).unwrap_or(&0)))
        .sum()
}

/// Repeatedly matches the longest common run of still-unmatched tokens.
/// Ties break toward the leftmost candidate start, then the leftmost
/// reference start, so the result is deterministic.
fn greedy_align(cand: &[String], refr: &[String]) -> (usize, usize) {
    let mut cand_used = vec![false; cand.len()];
    let mut ref_used = vec![false; refr.len()];
    let mut matches = 0;
    let mut chunks = 0;
    loop {
        let mut best: Option<(usize, usize, usize)> = None; // (len, i, j)
        for i in 0..cand.len() {
            if cand_used[i] {
                continue;
            }
            for j in 0..refr.len() {
                if ref_used[j] || cand[i] != refr[j] {
                    continue;
                }
                let mut len = 0;
                while i + len < cand.len()
                    && j + len < refr.len()
                    && !cand_used[i + len]
                    && !ref_used[j + len]
                    && cand[i + len] == refr[j + len]
                {
                    len += 1;
                }
                // Scanning (i, j) ascending, strict improvement keeps the
                // leftmost longest run.
                if best.map_or(true, |(bl, _, _)| len > bl) {
                    best = Some((len, i, j));
                }
            }
        }
        match best {
            Some((len, i, j)) if len > 0 => {
                for t in 0..len {
                    cand_used[i + t] = true;
                    ref_used[j + t] = true;
                }
                matches += len;
                chunks += 1;
            }
            _ => break,
        }
    }
    (matches, chunks)
}

struct ChunkSearch<'a> {
    cand: &'a [String],
    target: usize,
    best: usize,
    nodes: usize,
    ref_used: u64,
    /// Unused reference occurrences per word, kept in sync with `ref_used`.
    ref_avail: HashMap<&'a str, usize>,
    /// Candidate occurrences per word at position >= i, maintained as the
    /// scan advances.
    cand_remaining: HashMap<&'a str, usize>,
    ref_positions: HashMap<&'a str, Vec<usize>>,
}

impl<'a> ChunkSearch<'a> {
    fn upper_bound(&self) -> usize {
        self.cand_remaining
            .iter()
            .map(|(t, c)| c.min(self.ref_avail.get(t).unwrap_or(&0)))
            .sum()
    }

    /// Depth-first over candidate positions; prev is the last matched pair.
    fn dfs(&mut self, i: usize, matched: usize, chunks: usize, prev: Option<(usize, usize)>) {
        if chunks >= self.best {
            return;
        }
        self.nodes += 1;
        if self.nodes > SEARCH_NODE_BUDGET {
            return;
        }
        if matched == self.target {
            self.best = chunks;
            return;
        }
        if i == self.cand.len() || matched + self.upper_bound() < self.target {
            return;
        }
        let token = self.cand[i].as_str();
        *self.cand_remaining.get_mut(token).unwrap() -= 1;

        if self.ref_avail.get(token).copied().unwrap_or(0) > 0 {
            // Try continuing the current chunk first so a low chunk count is
            // found early and prunes the rest of the search.
            let continuation = match prev {
                Some((pi, pj)) if pi + 1 == i => Some(pj + 1),
                _ => None,
            };
            let positions = self.ref_positions[token].clone();
            let ordered = continuation
                .into_iter()
                .filter(|j| positions.contains(j))
                .chain(positions.iter().copied().filter(|&j| Some(j) != continuation));
            for j in ordered {
                if self.ref_used & (1 << j) != 0 {
                    continue;
                }
                let extends = matches!(prev, Some((pi, pj)) if pi + 1 == i && pj + 1 == j);
                let next_chunks = if extends { chunks } else { chunks + 1 };
                self.ref_used |= 1 << j;
                *self.ref_avail.get_mut(token).unwrap() -= 1;
                self.dfs(i + 1, matched + 1, next_chunks, Some((i, j)));
                *self.ref_avail.get_mut(token).unwrap() += 1;
                self.ref_used &= !(1 << j);
            }
        }

        // Leave this candidate position unmatched.
        self.dfs(i + 1, matched, chunks, prev);
        *self.cand_remaining.get_mut(token).unwrap() += 1;
    }
}

/// Minimum chunk count over all maximal matchings, bounded above by the
/// greedy result. Requires `refr.len() <= 64` (callers enforce the tighter
/// `EXACT_SEARCH_LIMIT`).
fn min_chunks_exact(
    cand: &[String],
    refr: &[String],
    target: usize,
    greedy_chunks: usize,
) -> usize {
    let mut ref_positions: HashMap<&str, Vec<usize>> = HashMap::new();
    for (j, t) in refr.iter().enumerate() {
        ref_positions.entry(t).or_default().push(j);
    }
    let mut ref_avail: HashMap<&str, usize> = HashMap::new();
    for t in refr {
        *ref_avail.entry(t).or_insert(0) += 1;
    }
    let mut cand_remaining: HashMap<&str, usize> = HashMap::new();
    for t in cand {
        *cand_remaining.entry(t).or_insert(0) += 1;
    }
    let mut search = ChunkSearch {
        cand,
        target,
        best: greedy_chunks,
        nodes: 0,
        ref_used: 0,
        ref_avail,
        cand_remaining,
        ref_positions,
    };
    search.dfs(0, 0, 0, None);
    search.best
}
