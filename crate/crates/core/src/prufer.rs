//! Prüfer coding of labeled trees.
//!
//! The integer sequence is computed on the unrooted skeleton of a
//! [`LabeledTree`] using its canonical ids. Together with the node count and
//! the id→label table it is a lossless record of the ordered tree: the
//! decoder roots the skeleton at id 1 and orders siblings by id, which for
//! pre-order numbered trees is exactly the source order.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tree::{LabeledTree, TokenRole, TreeError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("tree has {0} node(s), at least 2 are required")]
    TooSmall(usize),
    #[error("invalid Prüfer code: {0}")]
    InvalidCode(String),
    #[error("code does not belong to this tree: {0}")]
    CodeMismatch(String),
}

impl From<TreeError> for CodecError {
    fn from(e: TreeError) -> Self {
        match e {
            TreeError::TooSmall(n) => CodecError::TooSmall(n),
            other => CodecError::InvalidCode(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub id: usize,
    pub token: String,
    pub role: TokenRole,
}

/// Prüfer sequence plus everything needed to rebuild the labeled tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruferCode {
    pub n: usize,
    pub sequence: Vec<usize>,
    pub labels: Vec<LabelEntry>,
}

impl PruferCode {
    pub fn validate(&self) -> Result<(), CodecError> {
        if self.n < 2 {
            return Err(CodecError::InvalidCode(format!(
                "n = {} is below 2",
                self.n
            )));
        }
        if self.sequence.len() != self.n - 2 {
            return Err(CodecError::InvalidCode(format!(
                "sequence length {} inconsistent with n = {}",
                self.sequence.len(),
                self.n
            )));
        }
        if let Some(&bad) = self.sequence.iter().find(|&&v| v == 0 || v > self.n) {
            return Err(CodecError::InvalidCode(format!(
                "id {bad} out of range 1..={}",
                self.n
            )));
        }
        if self.labels.len() != self.n {
            return Err(CodecError::InvalidCode(format!(
                "labels table has {} entries, expected {}",
                self.labels.len(),
                self.n
            )));
        }
        if let Some((i, e)) = self.labels.iter().enumerate().find(|(i, e)| e.id != i + 1) {
            return Err(CodecError::InvalidCode(format!(
                "labels entry {i} carries id {}",
                e.id
            )));
        }
        Ok(())
    }

    pub fn label(&self, id: usize) -> &str {
        &self.labels[id - 1].token
    }
}

/// Syntactic tokens of the Prüfer sequence, position by position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntacticSequence {
    pub tokens: Vec<String>,
}

/// Lexical tokens expanded along the Prüfer sequence.
///
/// `leaf_ids[k]` is the leaf that contributed `tokens[k]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSequence {
    pub tokens: Vec<String>,
    pub leaf_ids: Vec<usize>,
}

/// Prüfer sequence of the unrooted tree on `1..=n` given by `edges`.
///
/// Repeatedly removes the smallest-id leaf and records its neighbour. Runs in
/// O(n log n): a min-heap holds current leaves and each node keeps the XOR of
/// its remaining neighbours, so a leaf's last neighbour is read off directly.
pub fn skeleton_sequence(n: usize, edges: &[(usize, usize)]) -> Result<Vec<usize>, CodecError> {
    if n < 2 {
        return Err(CodecError::TooSmall(n));
    }
    if edges.len() != n - 1 {
        return Err(CodecError::InvalidCode(format!(
            "{} edges for {n} nodes",
            edges.len()
        )));
    }
    let mut degree = vec![0usize; n + 1];
    let mut neighbours = vec![0usize; n + 1];
    for &(a, b) in edges {
        if a == 0 || b == 0 || a > n || b > n || a == b {
            return Err(CodecError::InvalidCode(format!("bad edge ({a}, {b})")));
        }
        degree[a] += 1;
        degree[b] += 1;
        neighbours[a] ^= b;
        neighbours[b] ^= a;
    }
    let mut leaves: BinaryHeap<Reverse<usize>> =
        (1..=n).filter(|&v| degree[v] == 1).map(Reverse).collect();
    let mut sequence = Vec::with_capacity(n - 2);
    for _ in 0..n - 2 {
        let Reverse(leaf) = leaves
            .pop()
            .ok_or_else(|| CodecError::InvalidCode("edge set is not a tree".into()))?;
        let next = neighbours[leaf];
        sequence.push(next);
        degree[leaf] = 0;
        neighbours[next] ^= leaf;
        degree[next] -= 1;
        if degree[next] == 1 {
            leaves.push(Reverse(next));
        }
    }
    Ok(sequence)
}

/// Inverse of [`skeleton_sequence`]: the edge set of the tree on `1..=n`.
pub fn skeleton_edges(n: usize, sequence: &[usize]) -> Result<Vec<(usize, usize)>, CodecError> {
    if n < 2 {
        return Err(CodecError::InvalidCode(format!("n = {n} is below 2")));
    }
    if sequence.len() != n - 2 {
        return Err(CodecError::InvalidCode(format!(
            "sequence length {} inconsistent with n = {n}",
            sequence.len()
        )));
    }
    let mut degree = vec![1usize; n + 1];
    for &v in sequence {
        if v == 0 || v > n {
            return Err(CodecError::InvalidCode(format!(
                "id {v} out of range 1..={n}"
            )));
        }
        degree[v] += 1;
    }
    let mut leaves: BinaryHeap<Reverse<usize>> =
        (1..=n).filter(|&v| degree[v] == 1).map(Reverse).collect();
    let mut edges = Vec::with_capacity(n - 1);
    for &v in sequence {
        let Reverse(leaf) = leaves
            .pop()
            .expect("a leaf exists while the sequence is nonempty");
        edges.push((leaf, v));
        degree[v] -= 1;
        if degree[v] == 1 {
            leaves.push(Reverse(v));
        }
    }
    let Reverse(a) = leaves.pop().expect("two survivors");
    let Reverse(b) = leaves.pop().expect("two survivors");
    edges.push((a, b));
    Ok(edges)
}

pub fn encode(tree: &LabeledTree) -> Result<PruferCode, CodecError> {
    let n = tree.len();
    if n < 2 {
        return Err(CodecError::TooSmall(n));
    }
    let sequence = skeleton_sequence(n, &tree.edges())?;
    let labels = tree
        .nodes()
        .iter()
        .map(|node| LabelEntry {
            id: node.id,
            token: node.label.clone(),
            role: node.role,
        })
        .collect();
    Ok(PruferCode {
        n,
        sequence,
        labels,
    })
}

/// Rebuilds the ordered tree: root at 1, children ordered by ascending id.
///
/// Roles in the labels table must agree with the rebuilt structure.
pub fn decode(code: &PruferCode) -> Result<LabeledTree, CodecError> {
    code.validate()?;
    let n = code.n;
    let edges = skeleton_edges(n, &code.sequence)?;
    let mut adjacency = vec![Vec::new(); n + 1];
    for &(a, b) in &edges {
        adjacency[a].push(b);
        adjacency[b].push(a);
    }
    let mut children = vec![Vec::new(); n];
    let mut visited = vec![false; n + 1];
    visited[1] = true;
    let mut stack = vec![1usize];
    while let Some(v) = stack.pop() {
        for &w in &adjacency[v] {
            if !visited[w] {
                visited[w] = true;
                children[v - 1].push(w);
                stack.push(w);
            }
        }
    }
    for kids in &mut children {
        kids.sort_unstable();
    }
    let labels = code.labels.iter().map(|e| e.token.clone()).collect();
    let tree = LabeledTree::from_parts(labels, children)?;
    for (node, entry) in tree.nodes().iter().zip(&code.labels) {
        if node.role != entry.role {
            return Err(CodecError::InvalidCode(format!(
                "node {} is recorded as {:?} but decodes as {:?}",
                node.id, entry.role, node.role
            )));
        }
    }
    Ok(tree)
}

pub fn syntactic_sequence(code: &PruferCode) -> Result<SyntacticSequence, CodecError> {
    code.validate()?;
    Ok(SyntacticSequence {
        tokens: code
            .sequence
            .iter()
            .map(|&v| code.label(v).to_owned())
            .collect(),
    })
}

/// Syntactic Prüfer sequence followed by every leaf token in id order.
///
/// Length is `(n - 2) + leaves`, never more than `2n - 3`.
pub fn build_encoder_input(tree: &LabeledTree) -> Result<Vec<String>, CodecError> {
    let code = encode(tree)?;
    let mut tokens: Vec<String> = code
        .sequence
        .iter()
        .map(|&v| tree.label(v).to_owned())
        .collect();
    tokens.extend(tree.leaf_ids().map(|id| tree.label(id).to_owned()));
    Ok(tokens)
}

/// Leaf-child tokens of each Prüfer-sequence node, repeated at every occurrence.
pub fn context_sequence(
    tree: &LabeledTree,
    code: &PruferCode,
) -> Result<ContextSequence, CodecError> {
    code.validate()?;
    if code.n != tree.len() {
        return Err(CodecError::CodeMismatch(format!(
            "code has n = {}, tree has {}",
            code.n,
            tree.len()
        )));
    }
    if tree
        .nodes()
        .iter()
        .zip(&code.labels)
        .any(|(node, entry)| node.label != entry.token || node.role != entry.role)
    {
        return Err(CodecError::CodeMismatch(
            "labels table differs from tree labels".into(),
        ));
    }
    if skeleton_sequence(tree.len(), &tree.edges())? != code.sequence {
        return Err(CodecError::CodeMismatch(
            "sequence differs from the tree's Prüfer sequence".into(),
        ));
    }
    let mut tokens = Vec::new();
    let mut leaf_ids = Vec::new();
    for &v in &code.sequence {
        for leaf in tree.leaf_child_ids(v)? {
            leaf_ids.push(leaf);
            tokens.push(tree.label(leaf).to_owned());
        }
    }
    Ok(ContextSequence { tokens, leaf_ids })
}
