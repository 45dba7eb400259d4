//! Test oracles: slow, direct re-implementations kept apart from the main crate.

use std::collections::HashMap;

use astprufer::corpus::EncodedExample;
use astprufer::model::{loss_and_gradients, token_accuracy, EncoderMode, ModelParams};
use astprufer::tree::parse_tree;
use astprufer::LabeledTree;
use rand::seq::SliceRandom;
use rand::Rng;

// ---------------------------------------------------------------------------
// Trees

/// Textbook O(n²) Prüfer construction: scan for the smallest leaf each round.
pub fn naive_prufer(tree: &LabeledTree) -> Vec<usize> {
    let n = tree.len();
    let mut adj = vec![Vec::new(); n + 1];
    for (p, c) in tree.edges() {
        adj[p].push(c);
        adj[c].push(p);
    }
    let mut removed = vec![false; n + 1];
    let mut out = Vec::new();
    for _ in 0..n.saturating_sub(2) {
        let leaf = (1..=n)
            .find(|&v| !removed[v] && adj[v].iter().filter(|&&w| !removed[w]).count() == 1)
            .expect("a tree always has a leaf");
        let neighbour = *adj[leaf]
            .iter()
            .find(|&&w| !removed[w])
            .expect("leaf has a neighbour");
        out.push(neighbour);
        removed[leaf] = true;
    }
    out
}

#[derive(Clone, Debug)]
struct Shape(Vec<Shape>);

fn forests(size: usize, memo: &mut HashMap<usize, Vec<Vec<Shape>>>) -> Vec<Vec<Shape>> {
    if let Some(f) = memo.get(&size) {
        return f.clone();
    }
    let mut out = Vec::new();
    if size == 0 {
        out.push(Vec::new());
    }
    for first in 1..=size {
        for kids in forests(first - 1, memo) {
            for rest in forests(size - first, memo) {
                let mut f = vec![Shape(kids.clone())];
                f.extend(rest);
                out.push(f);
            }
        }
    }
    memo.insert(size, out.clone());
    out
}

fn shape_json(shape: &Shape, labels: &mut impl Iterator<Item = String>, out: &mut String) {
    out.push_str("{\"label\":\"");
    out.push_str(&labels.next().expect("enough labels"));
    out.push_str("\",\"children\":[");
    for (i, k) in shape.0.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        shape_json(k, labels, out);
    }
    out.push_str("]}");
}

/// Every ordered tree on `n` nodes, each under every labelling drawn from `alphabet`.
pub fn all_ordered_trees(n: usize, alphabet: &[&str]) -> Vec<LabeledTree> {
    let mut memo = HashMap::new();
    let shapes: Vec<Shape> = forests(n - 1, &mut memo).into_iter().map(Shape).collect();
    let labelings = alphabet.len().pow(n as u32);
    let mut out = Vec::with_capacity(shapes.len() * labelings);
    for shape in &shapes {
        for code in 0..labelings {
            let mut c = code;
            let mut labels = (0..n).map(|_| {
                let l = alphabet[c % alphabet.len()].to_owned();
                c /= alphabet.len();
                l
            });
            let mut json = String::new();
            shape_json(shape, &mut labels, &mut json);
            out.push(parse_tree(json.as_bytes()).expect("generated document is valid"));
        }
    }
    out
}

/// Catalan number `C(k)`: ordered trees on `k + 1` nodes.
pub fn catalan(k: usize) -> usize {
    (0..k).fold(1usize, |c, i| c * 2 * (2 * i + 1) / (i + 2))
}

// ---------------------------------------------------------------------------
// Metrics

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for i in 0..=tokens.len() - n {
            *counts.entry(&tokens[i..i + n]).or_insert(0) += 1;
        }
    }
    counts
}

/// `(clipped matches, hypothesis n-grams)` for one order.
fn clipped(hyp: &[String], reference: &[String], n: usize) -> (usize, usize) {
    let h = ngram_counts(hyp, n);
    let r = ngram_counts(reference, n);
    let matches = h.iter().map(|(g, &c)| c.min(*r.get(g).unwrap_or(&0))).sum();
    (matches, hyp.len().saturating_sub(n - 1))
}

/// Sentence BLEU-4 with Chen and Cherry smoothing 4, following NLTK 3.6+
/// (`k = 5`; the i-th zero-count order gets `ln(len) / (2^i · k · total)`).
pub fn reference_sentence_bleu_s4(hyp: &[String], reference: &[String]) -> f64 {
    let len = hyp.len();
    let counts: Vec<(usize, usize)> = (1..=4).map(|n| clipped(hyp, reference, n)).collect();
    if counts[0].0 == 0 {
        return 0.0;
    }
    let mut precisions = Vec::new();
    let mut zero_orders = 0;
    for &(m, total) in &counts {
        let denom = total.max(1) as f64;
        if m > 0 {
            precisions.push(m as f64 / denom);
        } else if len > 1 {
            zero_orders += 1;
            let numerator = 1.0 / (2f64.powi(zero_orders) * 5.0 / (len as f64).ln());
            precisions.push(numerator / denom);
        } else {
            return 0.0;
        }
    }
    let bp = if len >= reference.len() {
        1.0
    } else {
        (1.0 - reference.len() as f64 / len as f64).exp()
    };
    let log_mean: f64 = precisions.iter().map(|p| p.ln()).sum::<f64>() / 4.0;
    100.0 * bp * log_mean.exp()
}

/// multi-bleu style corpus BLEU from summed clipped counts, no smoothing.
pub fn brute_corpus_bleu(hyps: &[Vec<String>], refs: &[Vec<String>]) -> f64 {
    let mut matches = [0usize; 4];
    let mut totals = [0usize; 4];
    for (h, r) in hyps.iter().zip(refs) {
        for n in 1..=4 {
            let (m, t) = clipped(h, r, n);
            matches[n - 1] += m;
            totals[n - 1] += t;
        }
    }
    if (0..4).any(|i| matches[i] == 0) {
        return 0.0;
    }
    let c: usize = hyps.iter().map(Vec::len).sum();
    let r: usize = refs.iter().map(Vec::len).sum();
    let bp = if c > r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    let log_mean: f64 = (0..4)
        .map(|i| (matches[i] as f64 / totals[i] as f64).ln())
        .sum::<f64>()
        / 4.0;
    100.0 * bp * log_mean.exp()
}

/// LCS length by checking every subsequence of the shorter side.
pub fn brute_lcs(a: &[String], b: &[String]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    assert!(short.len() <= 16, "brute force only for short inputs");
    let mut best = 0;
    for mask in 0u32..(1 << short.len()) {
        let k = mask.count_ones() as usize;
        if k <= best {
            continue;
        }
        let sub: Vec<&String> = (0..short.len())
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| &short[i])
            .collect();
        let mut it = long.iter();
        if sub.iter().all(|s| it.any(|t| t == *s)) {
            best = k;
        }
    }
    best
}

pub fn brute_rouge_l(hyp: &[String], reference: &[String]) -> f64 {
    let l = brute_lcs(hyp, reference) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let (p, r) = (l / hyp.len() as f64, l / reference.len() as f64);
    100.0 * 2.0 * p * r / (p + r)
}

fn count_chunks(pairs: &[(usize, usize)]) -> usize {
    let mut sorted = pairs.to_vec();
    sorted.sort_unstable();
    let mut chunks = 0;
    for (i, &(h, r)) in sorted.iter().enumerate() {
        if i == 0 || !(h == sorted[i - 1].0 + 1 && r == sorted[i - 1].1 + 1) {
            chunks += 1;
        }
    }
    chunks
}

/// `(matches, chunks)` over every exact-match alignment: most matches, then fewest chunks.
pub fn brute_meteor_alignment(hyp: &[String], reference: &[String]) -> (usize, usize) {
    fn walk(
        i: usize,
        hyp: &[String],
        reference: &[String],
        used: &mut Vec<bool>,
        pairs: &mut Vec<(usize, usize)>,
        best: &mut (usize, usize),
    ) {
        if i == hyp.len() {
            let m = pairs.len();
            let ch = count_chunks(pairs);
            if m > best.0 || (m == best.0 && ch < best.1) {
                *best = (m, ch);
            }
            return;
        }
        walk(i + 1, hyp, reference, used, pairs, best);
        for j in 0..reference.len() {
            if !used[j] && hyp[i] == reference[j] {
                used[j] = true;
                pairs.push((i, j));
                walk(i + 1, hyp, reference, used, pairs, best);
                pairs.pop();
                used[j] = false;
            }
        }
    }
    let mut best = (0, 0);
    walk(
        0,
        hyp,
        reference,
        &mut vec![false; reference.len()],
        &mut Vec::new(),
        &mut best,
    );
    best
}

pub fn brute_meteor(hyp: &[String], reference: &[String]) -> f64 {
    let (m, chunks) = brute_meteor_alignment(hyp, reference);
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / hyp.len() as f64;
    let r = m as f64 / reference.len() as f64;
    let f_mean = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * (chunks as f64 / m as f64).powi(3);
    100.0 * f_mean * (1.0 - penalty)
}

/// Random token list over a small alphabet, so that n-gram overlaps are common.
pub fn random_tokens<R: Rng>(
    rng: &mut R,
    min_len: usize,
    max_len: usize,
    alphabet: &[&str],
) -> Vec<String> {
    let len = rng.gen_range(min_len..=max_len);
    (0..len)
        .map(|_| alphabet.choose(rng).expect("nonempty").to_string())
        .collect()
}

// ---------------------------------------------------------------------------
// Gradients

#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub coordinates: usize,
}

/// `|a − n| / max(|a|, |n|, floor)`; the floor keeps coordinates whose true
/// gradient is essentially zero from dominating with round-off noise.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares analytic gradients with central differences of the mean loss at `coords`.
pub fn finite_difference_check(
    params: &ModelParams,
    mode: EncoderMode,
    example: &EncodedExample,
    coords: &[usize],
    eps: f64,
    floor: f64,
) -> GradCheck {
    let (_, grad) = loss_and_gradients(params, mode, example).expect("valid example");
    let analytic = grad.flatten();
    let flat = params.flatten();
    let mut probe = params.clone();
    let mut loss_at = |i: usize, v: f64| {
        let mut f = flat.clone();
        f[i] = v;
        probe.unflatten(&f).expect("same shape");
        token_accuracy(&probe, mode, example)
            .expect("valid example")
            .0
    };
    let mut worst: f64 = 0.0;
    for &i in coords {
        let numeric = (loss_at(i, flat[i] + eps) - loss_at(i, flat[i] - eps)) / (2.0 * eps);
        worst = worst.max(relative_error(analytic[i], numeric, floor));
    }
    GradCheck {
        max_rel_error: worst,
        coordinates: coords.len(),
    }
}

/// `count` coordinates spread over every tensor; embedding coordinates come
/// from rows the example actually uses.
pub fn sample_coordinates<R: Rng>(
    rng: &mut R,
    params: &ModelParams,
    example: &EncodedExample,
    count: usize,
) -> Vec<usize> {
    let ranges = params.tensor_ranges();
    let per_tensor = count.div_ceil(ranges.len());
    let mut coords = Vec::with_capacity(count);
    for (name, range) in &ranges {
        let rows: Option<(&[u32], usize)> = match *name {
            "emb_prufer" => Some((&example.prufer_ids, params.emb_prufer.cols)),
            "emb_context" => Some((&example.context_ids, params.emb_context.cols)),
            "emb_target" => Some((&example.comment_ids, params.emb_target.cols)),
            _ => None,
        };
        for _ in 0..per_tensor {
            let i = match rows {
                Some(([], _)) => continue,
                Some((ids, width)) => {
                    range.start
                        + *ids.choose(rng).expect("nonempty") as usize * width
                        + rng.gen_range(0..width)
                }
                None => rng.gen_range(range.clone()),
            };
            coords.push(i);
        }
    }
    coords.shuffle(rng);
    coords.truncate(count);
    coords
}
