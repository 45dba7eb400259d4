//! Competing sequential AST representations.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::tree::LabeledTree;

/// One item of a structure-based traversal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SbtItem {
    Open,
    Node(usize),
    Close,
}

/// Bracketed depth-first traversal as `Open, Node(id), <children>, Close` per node.
pub fn sbt_items(tree: &LabeledTree) -> Vec<SbtItem> {
    let mut out = Vec::with_capacity(3 * tree.len());
    // None marks a pending Close.
    let mut stack: Vec<Option<usize>> = vec![Some(tree.root_id())];
    while let Some(frame) = stack.pop() {
        match frame {
            Some(id) => {
                out.push(SbtItem::Open);
                out.push(SbtItem::Node(id));
                stack.push(None);
                stack.extend(tree.nodes()[id - 1].children.iter().rev().map(|&c| Some(c)));
            }
            None => out.push(SbtItem::Close),
        }
    }
    out
}

/// Bracketed depth-first traversal: `(`, label, children, `)` per node, so exactly `3n` tokens.
///
/// The original structure-based traversal repeats the label after the closing
/// bracket. This form drops the repeat so the length matches the `3n` count.
pub fn sbt_sequence(tree: &LabeledTree) -> Vec<String> {
    sbt_items(tree)
        .into_iter()
        .map(|item| match item {
            SbtItem::Open => "(".to_owned(),
            SbtItem::Node(id) => tree.label(id).to_owned(),
            SbtItem::Close => ")".to_owned(),
        })
        .collect()
}

/// Node ids in level order from the root, siblings in id order.
pub fn bfs_order(tree: &LabeledTree) -> Vec<usize> {
    let mut out = Vec::with_capacity(tree.len());
    let mut queue = VecDeque::from([tree.root_id()]);
    while let Some(id) = queue.pop_front() {
        out.push(id);
        queue.extend(tree.nodes()[id - 1].children.iter().copied());
    }
    out
}

pub fn bfs_sequence(tree: &LabeledTree) -> Vec<String> {
    bfs_order(tree)
        .into_iter()
        .map(|id| tree.label(id).to_owned())
        .collect()
}

/// Leaf tokens in id order, which for parsed trees is source order.
pub fn flat_tokens(tree: &LabeledTree) -> Vec<String> {
    tree.leaf_ids()
        .map(|id| tree.label(id).to_owned())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathSample {
    pub paths: Vec<Vec<String>>,
    pub max_paths: usize,
    pub max_path_len: usize,
}

/// Label sequences of the tree paths between pairs of lexical leaves.
///
/// Pairs `(a, b)` with `a < b` are visited in lexicographic order. Paths with
/// more than `max_path_len` nodes are skipped and enumeration stops once
/// `max_paths` paths were collected.
pub fn leaf_paths(tree: &LabeledTree, max_paths: usize, max_path_len: usize) -> PathSample {
    let leaves: Vec<usize> = tree.leaf_ids().collect();
    let n = tree.len();
    let mut parent = vec![0usize; n + 1];
    let mut depth = vec![0usize; n + 1];
    for node in tree.nodes() {
        for &c in &node.children {
            parent[c] = node.id;
        }
    }
    // Parents precede children in pre-order, but decoded trees need not be pre-order.
    let mut order = vec![tree.root_id()];
    let mut i = 0;
    while i < order.len() {
        let v = order[i];
        for &c in &tree.nodes()[v - 1].children {
            depth[c] = depth[v] + 1;
            order.push(c);
        }
        i += 1;
    }

    let mut paths = Vec::new();
    'pairs: for (i, &a) in leaves.iter().enumerate() {
        for &b in &leaves[i + 1..] {
            if paths.len() >= max_paths {
                break 'pairs;
            }
            let (mut up, mut down) = (vec![a], vec![b]);
            let (mut x, mut y) = (a, b);
            while depth[x] > depth[y] {
                x = parent[x];
                up.push(x);
            }
            while depth[y] > depth[x] {
                y = parent[y];
                down.push(y);
            }
            while x != y {
                x = parent[x];
                y = parent[y];
                up.push(x);
                down.push(y);
            }
            down.pop();
            if up.len() + down.len() > max_path_len {
                continue;
            }
            up.extend(down.into_iter().rev());
            paths.push(up.into_iter().map(|id| tree.label(id).to_owned()).collect());
        }
    }
    PathSample {
        paths,
        max_paths,
        max_path_len,
    }
}
