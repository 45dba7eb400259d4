//! Corpus preparation: tokenization, vocabularies, truncation, splits and
//! length statistics.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{bfs_order, sbt_items, SbtItem};
use crate::prufer::{self, CodecError};
use crate::tree::{LabeledTree, TokenRole};

pub const PAD: &str = "<PAD>";
pub const START: &str = "<START>";
pub const EOS: &str = "<EOS>";
pub const UNK: &str = "<UNK>";
pub const PAD_ID: u32 = 0;
pub const START_ID: u32 = 1;
pub const EOS_ID: u32 = 2;
pub const UNK_ID: u32 = 3;
const RESERVED: [&str; 4] = [PAD, START, EOS, UNK];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorpusError {
    #[error("statistics need at least one value")]
    EmptyInput,
    #[error("need at least 10 examples to split, got {0}")]
    TooFewExamples(usize),
    #[error("bad vocabulary file: {0}")]
    BadVocabulary(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Lowercases and splits on anything that is not alphanumeric; punctuation is dropped.
pub fn tokenize_comment(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|piece| !piece.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Splits an identifier on underscores and camelCase boundaries, lowercased.
///
/// An uppercase run followed by a lowercase letter ends one letter early, so
/// `HTTPServer` gives `http`, `server`. Digits stay attached to the piece
/// they follow. Tokens with no alphanumeric characters are kept whole.
pub fn split_identifier(token: &str) -> Vec<String> {
    let mut pieces = Vec::new();
    for word in token
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
    {
        let chars: Vec<char> = word.chars().collect();
        let mut start = 0;
        for i in 1..chars.len() {
            let (prev, cur) = (chars[i - 1], chars[i]);
            let lower_to_upper =
                (prev.is_lowercase() || prev.is_ascii_digit()) && cur.is_uppercase();
            let acronym_end = prev.is_uppercase()
                && cur.is_uppercase()
                && chars.get(i + 1).is_some_and(|c| c.is_lowercase());
            if lower_to_upper || acronym_end {
                pieces.push(chars[start..i].iter().collect::<String>().to_lowercase());
                start = i;
            }
        }
        pieces.push(chars[start..].iter().collect::<String>().to_lowercase());
    }
    if pieces.is_empty() {
        pieces.push(token.to_lowercase());
    }
    pieces
}

/// Token↔id map with the four reserved tokens at ids 0..=3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Id of `token`, or [`UNK_ID`] when absent.
    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    /// Maps ids back to tokens, dropping PAD and START and stopping at EOS.
    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        ids.iter()
            .take_while(|&&id| id != EOS_ID)
            .filter(|&&id| id != PAD_ID && id != START_ID)
            .map(|&id| self.token(id).unwrap_or(UNK).to_owned())
            .collect()
    }

    /// One token per line, line `i` (0-based) holding id `i`. Backslash, CR and LF are escaped.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(
                &t.replace('\\', "\\\\")
                    .replace('\n', "\\n")
                    .replace('\r', "\\r"),
            );
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, CorpusError> {
        let tokens: Vec<String> = text.lines().map(unescape).collect();
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()] != RESERVED {
            return Err(CorpusError::BadVocabulary(
                "first four lines must be the reserved tokens".into(),
            ));
        }
        let vocab = Self::from_tokens(tokens);
        if vocab.index.len() != vocab.tokens.len() {
            return Err(CorpusError::BadVocabulary("duplicate tokens".into()));
        }
        Ok(vocab)
    }
}

fn unescape(line: &str) -> String {
    let mut out = String::with_capacity(line.len());
    let mut chars = line.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}

/// Builds a capped vocabulary: reserved tokens first, then descending frequency, ties lexicographic.
pub fn build_vocab<I, T, S>(token_streams: I, cap: usize) -> Vocabulary
where
    I: IntoIterator<Item = T>,
    T: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut counts: HashMap<String, usize> = HashMap::new();
    for stream in token_streams {
        for tok in stream {
            let tok = tok.as_ref();
            if !RESERVED.contains(&tok) {
                *counts.entry(tok.to_owned()).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let room = cap.saturating_sub(RESERVED.len());
    let tokens = RESERVED
        .iter()
        .map(|s| s.to_string())
        .chain(ranked.into_iter().take(room).map(|(t, _)| t))
        .collect();
    Vocabulary::from_tokens(tokens)
}

/// Which sequence feeds the structural encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputRepr {
    /// Syntactic Prüfer sequence with the leaf tokens appended.
    #[default]
    Prufer,
    Sbt,
    Bfs,
    Flat,
}

impl fmt::Display for InputRepr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputRepr::Prufer => "prufer",
            InputRepr::Sbt => "sbt",
            InputRepr::Bfs => "bfs",
            InputRepr::Flat => "flat",
        })
    }
}

impl FromStr for InputRepr {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "prufer" => Ok(InputRepr::Prufer),
            "sbt" => Ok(InputRepr::Sbt),
            "bfs" => Ok(InputRepr::Bfs),
            "flat" => Ok(InputRepr::Flat),
            other => Err(format!(
                "unknown representation `{other}` (prufer|sbt|bfs|flat)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodeConfig {
    pub prufer_max: usize,
    pub context_max: usize,
    pub comment_max: usize,
    /// Split lexical tokens into lowercase subtokens. Syntactic tokens are never split.
    pub split_identifiers: bool,
    pub input_repr: InputRepr,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        Self {
            prufer_max: 200,
            context_max: 500,
            comment_max: 30,
            split_identifiers: true,
            input_repr: InputRepr::Prufer,
        }
    }
}

/// Truncated token sequences for one example, before vocabulary lookup.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleTokens {
    pub encoder: Vec<String>,
    pub context: Vec<String>,
    pub comment: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedExample {
    pub prufer_ids: Vec<u32>,
    pub context_ids: Vec<u32>,
    /// `START`, comment tokens, `EOS`.
    pub comment_ids: Vec<u32>,
    pub prufer_len: usize,
    pub context_len: usize,
    pub comment_len: usize,
    /// AST node count, kept for length-bucketed evaluation.
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabs {
    pub prufer: Vocabulary,
    pub context: Vocabulary,
    pub comment: Vocabulary,
}

impl Vocabs {
    /// Builds the three vocabularies from already-truncated example tokens.
    pub fn build(examples: &[ExampleTokens], cap: usize) -> Self {
        Self {
            prufer: build_vocab(examples.iter().map(|e| &e.encoder), cap),
            context: build_vocab(examples.iter().map(|e| &e.context), cap),
            comment: build_vocab(examples.iter().map(|e| &e.comment), cap),
        }
    }
}

fn push_token(out: &mut Vec<String>, label: &str, role: TokenRole, split: bool) {
    if split && role == TokenRole::Lexical {
        out.extend(split_identifier(label));
    } else {
        out.push(label.to_owned());
    }
}

fn role_of(tree: &LabeledTree, id: usize) -> TokenRole {
    tree.nodes()[id - 1].role
}

/// Encoder-side tokens for `repr`, untruncated.
pub fn encoder_tokens(
    tree: &LabeledTree,
    repr: InputRepr,
    split: bool,
) -> Result<Vec<String>, CodecError> {
    let mut out = Vec::new();
    match repr {
        InputRepr::Prufer => {
            let code = prufer::encode(tree)?;
            for &v in &code.sequence {
                push_token(&mut out, tree.label(v), TokenRole::Syntactic, split);
            }
            for leaf in tree.leaf_ids() {
                push_token(&mut out, tree.label(leaf), TokenRole::Lexical, split);
            }
        }
        InputRepr::Sbt => {
            for item in sbt_items(tree) {
                match item {
                    SbtItem::Open => out.push("(".into()),
                    SbtItem::Close => out.push(")".into()),
                    SbtItem::Node(id) => {
                        push_token(&mut out, tree.label(id), role_of(tree, id), split)
                    }
                }
            }
        }
        InputRepr::Bfs => {
            for id in bfs_order(tree) {
                push_token(&mut out, tree.label(id), role_of(tree, id), split);
            }
        }
        InputRepr::Flat => {
            for leaf in tree.leaf_ids() {
                push_token(&mut out, tree.label(leaf), TokenRole::Lexical, split);
            }
        }
    }
    Ok(out)
}

/// Token view of one example with every side truncated to its limit.
pub fn example_tokens(
    tree: &LabeledTree,
    comment: &str,
    config: &EncodeConfig,
) -> Result<ExampleTokens, CodecError> {
    let mut encoder = encoder_tokens(tree, config.input_repr, config.split_identifiers)?;
    encoder.truncate(config.prufer_max);
    let code = prufer::encode(tree)?;
    let ctx = prufer::context_sequence(tree, &code)?;
    let mut context = Vec::new();
    for tok in &ctx.tokens {
        push_token(
            &mut context,
            tok,
            TokenRole::Lexical,
            config.split_identifiers,
        );
        if context.len() >= config.context_max {
            break;
        }
    }
    context.truncate(config.context_max);
    let mut comment = tokenize_comment(comment);
    comment.truncate(config.comment_max);
    Ok(ExampleTokens {
        encoder,
        context,
        comment,
    })
}

pub fn encode_tokens(tokens: &ExampleTokens, vocabs: &Vocabs, nodes: usize) -> EncodedExample {
    let mut comment_ids = Vec::with_capacity(tokens.comment.len() + 2);
    comment_ids.push(START_ID);
    comment_ids.extend(vocabs.comment.encode(&tokens.comment));
    comment_ids.push(EOS_ID);
    EncodedExample {
        prufer_ids: vocabs.prufer.encode(&tokens.encoder),
        context_ids: vocabs.context.encode(&tokens.context),
        prufer_len: tokens.encoder.len(),
        context_len: tokens.context.len(),
        comment_len: comment_ids.len(),
        comment_ids,
        nodes,
    }
}

/// Truncates, adds `START`/`EOS` and maps every side through its vocabulary.
pub fn encode_example(
    tree: &LabeledTree,
    comment: &str,
    vocabs: &Vocabs,
    config: &EncodeConfig,
) -> Result<EncodedExample, CodecError> {
    let tokens = example_tokens(tree, comment, config)?;
    Ok(encode_tokens(&tokens, vocabs, tree.len()))
}

/// Train, validation and test portions.
pub type Splits<T> = (Vec<T>, Vec<T>, Vec<T>);

/// Seeded shuffle, then 10% validation and 10% test (floor); train takes the rest.
pub fn split_corpus<T>(examples: Vec<T>, seed: u64) -> Result<Splits<T>, CorpusError> {
    let total = examples.len();
    if total < 10 {
        return Err(CorpusError::TooFewExamples(total));
    }
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let tenth = total / 10;
    let mut slots: Vec<Option<T>> = examples.into_iter().map(Some).collect();
    let mut take = |range: std::ops::Range<usize>| -> Vec<T> {
        order[range]
            .iter()
            .map(|&i| slots[i].take().expect("each index is taken once"))
            .collect()
    };
    let train_len = total - 2 * tenth;
    let train = take(0..train_len);
    let valid = take(train_len..train_len + tenth);
    let test = take(train_len + tenth..total);
    Ok((train, valid, test))
}

/// Average, mode, median and share under a threshold, as in the corpus tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub average: f64,
    pub mode: usize,
    pub median: f64,
    pub pct_under_threshold: f64,
    pub threshold: usize,
}

/// Mode ties resolve to the smallest value; an even count takes the midpoint median.
pub fn stats(lengths: &[usize], threshold: usize) -> Result<CorpusStats, CorpusError> {
    if lengths.is_empty() {
        return Err(CorpusError::EmptyInput);
    }
    let count = lengths.len() as f64;
    let average = lengths.iter().map(|&l| l as f64).sum::<f64>() / count;
    let mut sorted = lengths.to_vec();
    sorted.sort_unstable();
    let mid = sorted.len() / 2;
    let median = if sorted.len().is_multiple_of(2) {
        (sorted[mid - 1] as f64 + sorted[mid] as f64) / 2.0
    } else {
        sorted[mid] as f64
    };
    let (mut mode, mut best) = (sorted[0], 0usize);
    for run in sorted.chunk_by(|a, b| a == b) {
        if run.len() > best {
            best = run.len();
            mode = run[0];
        }
    }
    let under = lengths.iter().filter(|&&l| l < threshold).count() as f64;
    Ok(CorpusStats {
        average,
        mode,
        median,
        pct_under_threshold: 100.0 * under / count,
        threshold,
    })
}
