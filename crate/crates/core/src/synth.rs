//! Seeded synthetic corpora.
//!
//! Three generators are provided:
//!
//! * [`random_tree`]: uniformly random tree shape (via a random Prüfer
//!   sequence) with random child order, renumbered in pre-order and labelled
//!   from small syntactic and lexical pools.
//! * [`toy_corpus`]: small trees paired with comments derived from their
//!   leaves, used for overfitting runs and pipeline tests.
//! * [`context_signal_corpus`]: the comment lists the leaf children of the
//!   node with the highest degree, which the context sequence repeats and the
//!   flat leaf list does not single out.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::split_identifier;
use crate::prufer::skeleton_edges;
use crate::tree::LabeledTree;

pub const SYNTACTIC_LABELS: [&str; 12] = [
    "BlockStatement",
    "IfStatement",
    "ReturnStatement",
    "MethodInvocation",
    "BinaryOperation",
    "LocalVariableDeclaration",
    "ForStatement",
    "StatementExpression",
    "Assignment",
    "MemberReference",
    "FormalParameter",
    "ClassCreator",
];

pub const LEXICAL_LABELS: [&str; 20] = [
    "count",
    "value",
    "getName",
    "indexOf",
    "buffer",
    "size",
    "result",
    "i",
    "userName",
    "MAX_SIZE",
    "toString",
    "list",
    "item",
    "key",
    "mergeErrorIntoOutput",
    "HTTPServer",
    "parseInt",
    "0",
    "null",
    "isEmpty",
];

/// Plain lowercase words so that comment tokenization and identifier
/// splitting agree on them.
const SIGNAL_WORDS: [&str; 24] = [
    "alpha", "bravo", "cargo", "delta", "eagle", "fable", "gamma", "hotel", "index", "joker",
    "karma", "lemon", "metal", "noble", "omega", "pixel", "quota", "radar", "sigma", "tempo",
    "ultra", "vapor", "whale", "xenon",
];

/// A synthetic (AST, comment) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthExample {
    pub tree: LabeledTree,
    pub comment: String,
}

impl SynthExample {
    /// The corpus JSONL record `{"ast": .., "comment": ..}`.
    pub fn to_record(&self) -> String {
        format!(
            "{{\"ast\":{},\"comment\":{}}}",
            self.tree.to_json(),
            serde_json::Value::String(self.comment.clone())
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    Toy,
    ContextSignal,
    Random,
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SynthKind::Toy => "toy",
            SynthKind::ContextSignal => "context-signal",
            SynthKind::Random => "random",
        })
    }
}

impl FromStr for SynthKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "toy" => Ok(SynthKind::Toy),
            "context-signal" => Ok(SynthKind::ContextSignal),
            "random" => Ok(SynthKind::Random),
            other => Err(format!(
                "unknown corpus kind {other:?} (expected toy, context-signal or random)"
            )),
        }
    }
}

/// Generates `count` examples of `kind` from `seed`.
pub fn corpus(kind: SynthKind, count: usize, seed: u64) -> Vec<SynthExample> {
    match kind {
        SynthKind::Toy => toy_corpus(count, seed),
        SynthKind::ContextSignal => context_signal_corpus(count, seed),
        SynthKind::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..count)
                .map(|_| {
                    let n = rng.gen_range(2..=200);
                    let tree = random_tree(&mut rng, n);
                    let comment = leaf_comment(&tree, 4);
                    SynthExample { tree, comment }
                })
                .collect()
        }
    }
}

/// Renumbers a rooted tree given as child lists over arbitrary 0-based
/// indices into pre-order, labelling each node from its old index and leaf status.
fn build_preorder(
    children: &[Vec<usize>],
    root: usize,
    mut label: impl FnMut(usize, bool) -> String,
) -> LabeledTree {
    let n = children.len();
    let mut new_id = vec![0usize; n];
    let mut order = Vec::with_capacity(n);
    let mut stack = vec![root];
    while let Some(v) = stack.pop() {
        order.push(v);
        new_id[v] = order.len();
        stack.extend(children[v].iter().rev().copied());
    }
    let labels = order
        .iter()
        .map(|&v| label(v, children[v].is_empty()))
        .collect();
    let kids = order
        .iter()
        .map(|&v| children[v].iter().map(|&c| new_id[c]).collect())
        .collect();
    LabeledTree::from_parts(labels, kids).expect("renumbered child lists form a tree")
}

/// Uniformly random tree shape on `n ≥ 2` nodes with random sibling order
/// and pool labels, numbered in pre-order.
pub fn random_tree<R: Rng>(rng: &mut R, n: usize) -> LabeledTree {
    assert!(n >= 2, "trees need at least two nodes");
    let sequence: Vec<usize> = (0..n - 2).map(|_| rng.gen_range(1..=n)).collect();
    let edges = skeleton_edges(n, &sequence).expect("sequence entries are in range");
    let mut adjacent = vec![Vec::new(); n];
    for (a, b) in edges {
        adjacent[a - 1].push(b - 1);
        adjacent[b - 1].push(a - 1);
    }
    let root = rng.gen_range(0..n);
    let mut children = vec![Vec::new(); n];
    let mut seen = vec![false; n];
    seen[root] = true;
    let mut queue = std::collections::VecDeque::from([root]);
    while let Some(v) = queue.pop_front() {
        for &w in &adjacent[v] {
            if !seen[w] {
                seen[w] = true;
                children[v].push(w);
                queue.push_back(w);
            }
        }
        children[v].shuffle(rng);
    }
    build_preorder(&children, root, |_, leaf| {
        let pool: &[&str] = if leaf {
            &LEXICAL_LABELS
        } else {
            &SYNTACTIC_LABELS
        };
        pool[rng.gen_range(0..pool.len())].to_owned()
    })
}

/// Lowercased subtokens of the first few leaves, in source order.
fn leaf_comment(tree: &LabeledTree, max_words: usize) -> String {
    let words: Vec<String> = tree
        .leaf_ids()
        .flat_map(|id| split_identifier(tree.label(id)))
        .filter(|w| w.chars().any(char::is_alphabetic))
        .take(max_words)
        .collect();
    words.join(" ")
}

/// Small random trees (6 to 20 nodes) whose comment is a verb chosen by the
/// root label followed by the first leaf subtokens.
pub fn toy_corpus(count: usize, seed: u64) -> Vec<SynthExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let verbs = ["returns", "computes", "checks", "builds"];
    (0..count)
        .map(|_| {
            let n = rng.gen_range(6..=20);
            let tree = random_tree(&mut rng, n);
            let verb = verbs[SYNTACTIC_LABELS
                .iter()
                .position(|l| *l == tree.label(1))
                .unwrap_or(0)
                % verbs.len()];
            let rest = leaf_comment(&tree, 3);
            let comment = if rest.is_empty() {
                verb.to_owned()
            } else {
                format!("{verb} {rest}")
            };
            SynthExample { tree, comment }
        })
        .collect()
}

/// Method-like trees with one declarator node holding three leaf children
/// interleaved with one or two member references (degree 5 or 6), next to
/// one or two call statements whose nodes have degree at most 3. The comment
/// is the declarator's three leaf children in source order.
pub fn context_signal_corpus(count: usize, seed: u64) -> Vec<SynthExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| context_signal_example(&mut rng))
        .collect()
}

#[derive(Default)]
struct Builder {
    labels: Vec<String>,
    children: Vec<Vec<usize>>,
}

impl Builder {
    fn add(&mut self, label: &str, children: Vec<usize>) -> usize {
        self.labels.push(label.to_owned());
        self.children.push(children);
        self.labels.len() - 1
    }

    fn finish(self, root: usize) -> LabeledTree {
        let labels = self.labels;
        build_preorder(&self.children, root, |v, _| labels[v].clone())
    }
}

fn context_signal_example(rng: &mut ChaCha8Rng) -> SynthExample {
    let mut b = Builder::default();
    let picked: Vec<&str> = SIGNAL_WORDS.choose_multiple(rng, 3).copied().collect();
    let mut hub_children: Vec<usize> = picked.iter().map(|w| b.add(w, Vec::new())).collect();
    for _ in 0..rng.gen_range(1..=2) {
        let leaf = b.add(SIGNAL_WORDS.choose(rng).expect("nonempty"), Vec::new());
        let member = b.add("MemberReference", vec![leaf]);
        hub_children.insert(rng.gen_range(0..=hub_children.len()), member);
    }
    let hub = b.add("VariableDeclarator", hub_children);
    let mut statements = vec![b.add("LocalVariableDeclaration", vec![hub])];
    for _ in 0..rng.gen_range(1..=2) {
        let qualifier = b.add(SIGNAL_WORDS.choose(rng).expect("nonempty"), Vec::new());
        let arg = b.add(SIGNAL_WORDS.choose(rng).expect("nonempty"), Vec::new());
        let args = b.add("Arguments", vec![arg]);
        let call = b.add("MethodInvocation", vec![qualifier, args]);
        statements.push(b.add("StatementExpression", vec![call]));
    }
    statements.shuffle(rng);
    let root = b.add("MethodDeclaration", statements);
    SynthExample {
        tree: b.finish(root),
        comment: picked.join(" "),
    }
}
