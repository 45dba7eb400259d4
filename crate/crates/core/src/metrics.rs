//! Translation metrics on a 0–100 scale: sentence BLEU with smoothing
//! method 4, corpus BLEU, METEOR (exact matches only) and ROUGE-L.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("reference is empty")]
    EmptyReference,
    #[error("{hyps} hypotheses but {refs} references")]
    LengthMismatch { hyps: usize, refs: usize },
    #[error("corpus is empty")]
    EmptyCorpus,
}

const MAX_ORDER: usize = 4;
/// Constant K of smoothing method 4.
const SMOOTH_K: f64 = 5.0;

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts
                .entry(window.iter().map(AsRef::as_ref).collect())
                .or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram matches and the hypothesis n-gram total for one order.
fn clipped_matches<S: AsRef<str>, R: AsRef<str>>(
    hyp: &[S],
    reference: &[R],
    n: usize,
) -> (usize, usize) {
    let hyp_counts = ngram_counts(hyp, n);
    let ref_counts = ngram_counts(reference, n);
    let matched = hyp_counts
        .iter()
        .map(|(gram, &c)| c.min(ref_counts.get(gram).copied().unwrap_or(0)))
        .sum();
    (matched, hyp.len().saturating_sub(n - 1))
}

fn brevity_penalty(hyp_len: usize, ref_len: usize) -> f64 {
    if hyp_len == 0 {
        0.0
    } else if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    }
}

/// Sentence-level BLEU-4 with smoothing method 4 of Chen and Cherry.
///
/// A zero-match order `n` gets precision `ln(|hyp|) / (2^k · K · max(1, total_n))`
/// where `k` counts the zero-match orders seen so far and `K = 5`. A
/// hypothesis with no unigram match scores 0, as does a one-token hypothesis
/// that cannot be smoothed.
pub fn sentence_bleu_s4<S: AsRef<str>, R: AsRef<str>>(
    hyp: &[S],
    reference: &[R],
) -> Result<f64, MetricError> {
    if reference.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    if hyp.is_empty() {
        return Ok(0.0);
    }
    let hyp_len = hyp.len();
    let mut log_sum = 0.0;
    let mut zero_orders = 0;
    for n in 1..=MAX_ORDER {
        let (matched, total) = clipped_matches(hyp, reference, n);
        let denominator = total.max(1) as f64;
        let precision = if matched > 0 {
            matched as f64 / denominator
        } else if n == 1 || hyp_len <= 1 {
            return Ok(0.0);
        } else {
            zero_orders += 1;
            let scale = 2f64.powi(zero_orders) * SMOOTH_K / (hyp_len as f64).ln();
            1.0 / scale / denominator
        };
        log_sum += precision.ln() / MAX_ORDER as f64;
    }
    Ok(100.0 * brevity_penalty(hyp_len, reference.len()) * log_sum.exp())
}

/// Corpus BLEU-4 aggregated as `multi-bleu.perl` does: summed clipped counts,
/// summed lengths, no smoothing.
pub fn corpus_bleu<S: AsRef<str>, R: AsRef<str>>(
    hyps: &[Vec<S>],
    refs: &[Vec<R>],
) -> Result<f64, MetricError> {
    if hyps.len() != refs.len() {
        return Err(MetricError::LengthMismatch {
            hyps: hyps.len(),
            refs: refs.len(),
        });
    }
    if hyps.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    if refs.iter().any(Vec::is_empty) {
        return Err(MetricError::EmptyReference);
    }
    let mut matched = [0usize; MAX_ORDER];
    let mut total = [0usize; MAX_ORDER];
    let (mut hyp_len, mut ref_len) = (0, 0);
    for (h, r) in hyps.iter().zip(refs) {
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=MAX_ORDER {
            let (m, t) = clipped_matches(h, r, n);
            matched[n - 1] += m;
            total[n - 1] += t;
        }
    }
    if matched.iter().zip(&total).any(|(&m, &t)| m == 0 || t == 0) {
        return Ok(0.0);
    }
    let log_mean = matched
        .iter()
        .zip(&total)
        .map(|(&m, &t)| (m as f64 / t as f64).ln())
        .sum::<f64>()
        / MAX_ORDER as f64;
    Ok(100.0 * brevity_penalty(hyp_len, ref_len) * log_mean.exp())
}

/// Node budget for the chunk-minimising alignment search.
const ALIGN_BUDGET: usize = 2_000_000;

struct AlignSearch<'a> {
    hyp: &'a [usize],
    reference: &'a [usize],
    positions: Vec<Vec<usize>>,
    need: Vec<usize>,
    remaining: Vec<usize>,
    used: Vec<bool>,
    best: usize,
    visited: usize,
}

impl AlignSearch<'_> {
    fn run_length(&self, i: usize, j: usize) -> usize {
        self.hyp[i..]
            .iter()
            .zip(&self.reference[j..])
            .take_while(|(a, b)| a == b)
            .count()
    }

    fn search(&mut self, i: usize, prev: Option<usize>, chunks: usize) {
        self.visited += 1;
        if chunks >= self.best || self.visited > ALIGN_BUDGET {
            return;
        }
        if i == self.hyp.len() {
            self.best = chunks;
            return;
        }
        let t = self.hyp[i];
        self.remaining[t] -= 1;
        if self.need[t] > 0 {
            let mut candidates: Vec<usize> = self.positions[t]
                .iter()
                .copied()
                .filter(|&j| !self.used[j])
                .collect();
            // Extend the running chunk first, then longest upcoming run, then leftmost.
            candidates.sort_by_key(|&j| {
                (
                    prev.is_none_or(|p| p + 1 != j),
                    usize::MAX - self.run_length(i, j),
                    j,
                )
            });
            for j in candidates {
                let extends = prev.is_some_and(|p| p + 1 == j);
                self.used[j] = true;
                self.need[t] -= 1;
                self.search(i + 1, Some(j), chunks + usize::from(!extends));
                self.need[t] += 1;
                self.used[j] = false;
            }
        }
        if self.remaining[t] >= self.need[t] {
            self.search(i + 1, None, chunks);
        }
        self.remaining[t] += 1;
    }
}

/// Maximum number of exact unigram matches and the fewest chunks any
/// maximum alignment can have.
///
/// Chunks are runs of matches adjacent in both sequences. The minimum is found
/// by branch-and-bound; past a fixed node budget the best alignment found so
/// far is returned, which only happens for long, highly repetitive inputs.
pub fn meteor_alignment<S: AsRef<str>, R: AsRef<str>>(
    hyp: &[S],
    reference: &[R],
) -> (usize, usize) {
    let hyp_strs: Vec<&str> = hyp.iter().map(AsRef::as_ref).collect();
    let ref_strs: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();
    let mut ids: HashMap<&str, usize> = HashMap::new();
    let mut interned = Vec::with_capacity(hyp_strs.len() + ref_strs.len());
    for &s in hyp_strs.iter().chain(&ref_strs) {
        let next = ids.len();
        interned.push(*ids.entry(s).or_insert(next));
    }
    let ref_ids = interned.split_off(hyp_strs.len());
    let hyp_ids = interned;
    let kinds = ids.len();
    let mut positions = vec![Vec::new(); kinds];
    for (j, &t) in ref_ids.iter().enumerate() {
        positions[t].push(j);
    }
    let mut remaining = vec![0usize; kinds];
    for &t in &hyp_ids {
        remaining[t] += 1;
    }
    let need: Vec<usize> = (0..kinds)
        .map(|t| remaining[t].min(positions[t].len()))
        .collect();
    let matches: usize = need.iter().sum();
    if matches == 0 {
        return (0, 0);
    }
    let mut search = AlignSearch {
        hyp: &hyp_ids,
        reference: &ref_ids,
        positions,
        need,
        remaining,
        used: vec![false; ref_ids.len()],
        best: usize::MAX,
        visited: 0,
    };
    search.search(0, None, 0);
    (matches, search.best)
}

/// METEOR with exact matching: `F_mean = 10PR / (R + 9P)`, penalty `0.5 (chunks / m)^3`.
pub fn meteor<S: AsRef<str>, R: AsRef<str>>(
    hyp: &[S],
    reference: &[R],
) -> Result<f64, MetricError> {
    if reference.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let (m, chunks) = meteor_alignment(hyp, reference);
    if m == 0 {
        return Ok(0.0);
    }
    let precision = m as f64 / hyp.len() as f64;
    let recall = m as f64 / reference.len() as f64;
    let f_mean = 10.0 * precision * recall / (recall + 9.0 * precision);
    let penalty = 0.5 * (chunks as f64 / m as f64).powi(3);
    Ok(100.0 * f_mean * (1.0 - penalty))
}

pub fn lcs_len<S: AsRef<str>, R: AsRef<str>>(a: &[S], b: &[R]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x.as_ref() == y.as_ref() {
                diag + 1
            } else {
                up.max(row[j])
            };
            diag = up;
        }
    }
    row[b.len()]
}

/// ROUGE-L F1 (harmonic mean of LCS precision and recall).
pub fn rouge_l<S: AsRef<str>, R: AsRef<str>>(
    hyp: &[S],
    reference: &[R],
) -> Result<f64, MetricError> {
    if reference.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let lcs = lcs_len(hyp, reference);
    if lcs == 0 {
        return Ok(0.0);
    }
    let recall = lcs as f64 / reference.len() as f64;
    let precision = lcs as f64 / hyp.len() as f64;
    Ok(100.0 * 2.0 * precision * recall / (precision + recall))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub s_bleu: f64,
    pub c_bleu: f64,
    pub meteor: f64,
    pub rouge_l: f64,
}

/// Per-pair scores, which the bucketed report and correlation reuse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairScores {
    pub s_bleu: f64,
    pub meteor: f64,
    pub rouge_l: f64,
}

pub fn pair_scores<S: AsRef<str>, R: AsRef<str>>(
    hyp: &[S],
    reference: &[R],
) -> Result<PairScores, MetricError> {
    Ok(PairScores {
        s_bleu: sentence_bleu_s4(hyp, reference)?,
        meteor: meteor(hyp, reference)?,
        rouge_l: rouge_l(hyp, reference)?,
    })
}

/// Corpus report: sentence metrics averaged over pairs, corpus BLEU aggregated.
pub fn score_corpus<S: AsRef<str>, R: AsRef<str>>(
    hyps: &[Vec<S>],
    refs: &[Vec<R>],
) -> Result<ScoreReport, MetricError> {
    let c_bleu = corpus_bleu(hyps, refs)?;
    let pairs = hyps
        .iter()
        .zip(refs)
        .map(|(h, r)| pair_scores(h, r))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(summarize(&pairs, c_bleu))
}

fn summarize(pairs: &[PairScores], c_bleu: f64) -> ScoreReport {
    let count = pairs.len() as f64;
    ScoreReport {
        s_bleu: pairs.iter().map(|p| p.s_bleu).sum::<f64>() / count,
        c_bleu,
        meteor: pairs.iter().map(|p| p.meteor).sum::<f64>() / count,
        rouge_l: pairs.iter().map(|p| p.rouge_l).sum::<f64>() / count,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketScore {
    /// Inclusive lower bound of the length bucket.
    pub lo: usize,
    /// Exclusive upper bound.
    pub hi: usize,
    pub count: usize,
    pub report: ScoreReport,
}

/// Scores grouped into length buckets of `width`; only nonempty buckets are returned.
pub fn bucket_scores<S: AsRef<str>, R: AsRef<str>>(
    hyps: &[Vec<S>],
    refs: &[Vec<R>],
    lengths: &[usize],
    width: usize,
) -> Result<Vec<BucketScore>, MetricError> {
    if hyps.len() != refs.len() || lengths.len() != hyps.len() {
        return Err(MetricError::LengthMismatch {
            hyps: hyps.len(),
            refs: refs.len().min(lengths.len()),
        });
    }
    let width = width.max(1);
    let mut buckets: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, &len) in lengths.iter().enumerate() {
        buckets.entry(len / width).or_default().push(i);
    }
    buckets
        .into_iter()
        .map(|(b, members)| {
            let h: Vec<&[S]> = members.iter().map(|&i| hyps[i].as_slice()).collect();
            let r: Vec<&[R]> = members.iter().map(|&i| refs[i].as_slice()).collect();
            let hv: Vec<Vec<&str>> = h
                .iter()
                .map(|s| s.iter().map(AsRef::as_ref).collect())
                .collect();
            let rv: Vec<Vec<&str>> = r
                .iter()
                .map(|s| s.iter().map(AsRef::as_ref).collect())
                .collect();
            Ok(BucketScore {
                lo: b * width,
                hi: (b + 1) * width,
                count: members.len(),
                report: score_corpus(&hv, &rv)?,
            })
        })
        .collect()
}

/// Pearson correlation coefficient; `None` when undefined (fewer than two points or zero variance).
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx.sqrt() * syy.sqrt()))
}
