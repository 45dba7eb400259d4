//! Ordered labeled trees and AST-JSON ingestion.
//!
//! Every AST is normalised into a [`LabeledTree`] whose node ids are the
//! pre-order depth-first numbering `1..=n` (root = 1). Roles are derived from
//! structure: leaves carry lexical tokens, internal nodes carry syntactic ones.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("malformed AST document: {0}")]
    MalformedDocument(String),
    #[error("not a tree: {0}")]
    NotATree(String),
    #[error("tree has {0} node(s), at least 2 are required")]
    TooSmall(usize),
    #[error("node id {id} out of range 1..={n}")]
    IdOutOfRange { id: usize, n: usize },
}

/// Whether a token labels a leaf (lexical) or an internal node (syntactic).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenRole {
    #[serde(rename = "lex")]
    Lexical,
    #[serde(rename = "syn")]
    Syntactic,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: usize,
    pub label: String,
    pub role: TokenRole,
    pub children: Vec<usize>,
}

/// Rooted ordered tree over ids `1..=n`, rooted at id 1.
///
/// Trees produced by [`parse_tree`] are always numbered in pre-order. Trees
/// built through [`LabeledTree::from_parts`] (for example by the Prüfer
/// decoder) only have to be rooted at 1; [`LabeledTree::is_preorder`] tells
/// the two apart.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledTree {
    nodes: Vec<Node>,
    parents: Vec<Option<usize>>,
}

impl LabeledTree {
    /// Builds a tree from per-id labels and ordered child lists.
    ///
    /// `labels[i]` and `children[i]` describe node `i + 1`. The root must be
    /// id 1 and every other id must have exactly one parent and be reachable.
    pub fn from_parts(labels: Vec<String>, children: Vec<Vec<usize>>) -> Result<Self, TreeError> {
        let n = labels.len();
        if children.len() != n {
            return Err(TreeError::NotATree(format!(
                "{} labels but {} child lists",
                n,
                children.len()
            )));
        }
        if n == 0 {
            return Err(TreeError::TooSmall(0));
        }
        let mut parents = vec![None; n];
        for (i, kids) in children.iter().enumerate() {
            for &c in kids {
                if c == 0 || c > n {
                    return Err(TreeError::NotATree(format!("child id {c} out of range")));
                }
                if c == 1 {
                    return Err(TreeError::NotATree("root 1 listed as a child".into()));
                }
                if let Some(p) = parents[c - 1] {
                    return Err(TreeError::NotATree(format!(
                        "node {c} has two parents ({p} and {})",
                        i + 1
                    )));
                }
                parents[c - 1] = Some(i + 1);
            }
        }
        if let Some(orphan) = (2..=n).find(|&id| parents[id - 1].is_none()) {
            return Err(TreeError::NotATree(format!("node {orphan} has no parent")));
        }
        // n - 1 parent links with unique parents: the graph is a tree iff everything is reachable from 1.
        let mut seen = vec![false; n];
        let mut stack = vec![1usize];
        let mut reached = 0;
        while let Some(id) = stack.pop() {
            if seen[id - 1] {
                continue;
            }
            seen[id - 1] = true;
            reached += 1;
            stack.extend(children[id - 1].iter().copied());
        }
        if reached != n {
            return Err(TreeError::NotATree(
                "cycle detected, not all nodes reachable from the root".into(),
            ));
        }
        let nodes = labels
            .into_iter()
            .zip(children)
            .enumerate()
            .map(|(i, (label, children))| Node {
                id: i + 1,
                label,
                role: if children.is_empty() {
                    TokenRole::Lexical
                } else {
                    TokenRole::Syntactic
                },
                children,
            })
            .collect();
        Ok(Self { nodes, parents })
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root_id(&self) -> usize {
        1
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> Result<&Node, TreeError> {
        self.check_id(id)?;
        Ok(&self.nodes[id - 1])
    }

    pub fn label(&self, id: usize) -> &str {
        &self.nodes[id - 1].label
    }

    pub fn parent(&self, id: usize) -> Result<Option<usize>, TreeError> {
        self.check_id(id)?;
        Ok(self.parents[id - 1])
    }

    /// Undirected degree: number of children plus one for the parent edge.
    pub fn degree(&self, id: usize) -> Result<usize, TreeError> {
        self.check_id(id)?;
        Ok(self.nodes[id - 1].children.len() + usize::from(self.parents[id - 1].is_some()))
    }

    /// Labels of the leaf children of `id`, in sibling order.
    pub fn leaf_children(&self, id: usize) -> Result<Vec<&str>, TreeError> {
        Ok(self
            .leaf_child_ids(id)?
            .map(|c| self.nodes[c - 1].label.as_str())
            .collect())
    }

    pub(crate) fn leaf_child_ids(
        &self,
        id: usize,
    ) -> Result<impl Iterator<Item = usize> + '_, TreeError> {
        self.check_id(id)?;
        Ok(self.nodes[id - 1]
            .children
            .iter()
            .copied()
            .filter(|&c| self.nodes[c - 1].children.is_empty()))
    }

    /// Ids of lexical leaves in ascending id order.
    pub fn leaf_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes
            .iter()
            .filter(|n| n.children.is_empty())
            .map(|n| n.id)
    }

    /// Undirected edge list `(parent, child)` in ascending child order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (2..=self.len())
            .filter_map(|c| self.parents[c - 1].map(|p| (p, c)))
            .collect()
    }

    /// True when ids are the pre-order numbering with siblings in ascending order.
    pub fn is_preorder(&self) -> bool {
        let mut expected = 1;
        let mut stack = vec![1usize];
        while let Some(id) = stack.pop() {
            if id != expected {
                return false;
            }
            expected += 1;
            stack.extend(self.nodes[id - 1].children.iter().rev().copied());
        }
        expected == self.len() + 1
    }

    /// Serializes back to the nested AST-JSON form.
    pub fn to_json(&self) -> String {
        enum Frame {
            Open { id: usize, first: bool },
            Close,
        }
        let mut out = String::new();
        let mut stack = vec![Frame::Open { id: 1, first: true }];
        while let Some(frame) = stack.pop() {
            match frame {
                Frame::Open { id, first } => {
                    if !first {
                        out.push(',');
                    }
                    let node = &self.nodes[id - 1];
                    out.push_str("{\"label\":");
                    out.push_str(
                        &serde_json::to_string(&node.label).expect("string serialization"),
                    );
                    out.push_str(",\"children\":[");
                    stack.push(Frame::Close);
                    for (k, &c) in node.children.iter().enumerate().rev() {
                        stack.push(Frame::Open {
                            id: c,
                            first: k == 0,
                        });
                    }
                }
                Frame::Close => out.push_str("]}"),
            }
        }
        out
    }

    fn check_id(&self, id: usize) -> Result<(), TreeError> {
        if id == 0 || id > self.nodes.len() {
            Err(TreeError::IdOutOfRange {
                id,
                n: self.nodes.len(),
            })
        } else {
            Ok(())
        }
    }
}

/// Parses an AST-JSON document into a pre-order numbered tree with at least two nodes.
///
/// Two layouts are accepted. The nested form `{"label": .., "children": [..]}`
/// is the normal one. The flat form `{"nodes": [{"label": .., "children": [i, ..]}, ..]}`
/// refers to children by index into `nodes`; it is the only layout in which
/// sharing, cycles or orphans can be expressed, and those are rejected as
/// [`TreeError::NotATree`]. Any `role` field is ignored.
pub fn parse_tree(document: &[u8]) -> Result<LabeledTree, TreeError> {
    let mut de = serde_json::Deserializer::from_slice(document);
    de.disable_recursion_limit();
    let value =
        Value::deserialize(&mut de).map_err(|e| TreeError::MalformedDocument(e.to_string()))?;
    de.end()
        .map_err(|e| TreeError::MalformedDocument(e.to_string()))?;
    parse_tree_value(&value)
}

/// Same as [`parse_tree`] for an already-decoded JSON value.
pub fn parse_tree_value(value: &Value) -> Result<LabeledTree, TreeError> {
    let tree = match value.get("nodes") {
        Some(nodes) if value.get("label").is_none() => from_flat(nodes)?,
        _ => from_nested(value)?,
    };
    if tree.len() < 2 {
        return Err(TreeError::TooSmall(tree.len()));
    }
    Ok(tree)
}

fn node_fields(value: &Value) -> Result<(&str, &[Value]), TreeError> {
    let obj = value
        .as_object()
        .ok_or_else(|| TreeError::MalformedDocument("node is not an object".into()))?;
    let label = obj
        .get("label")
        .and_then(Value::as_str)
        .ok_or_else(|| TreeError::MalformedDocument("node without a string \"label\"".into()))?;
    let children = match obj.get("children") {
        None | Some(Value::Null) => &[][..],
        Some(Value::Array(items)) => items.as_slice(),
        Some(_) => {
            return Err(TreeError::MalformedDocument(
                "\"children\" is not an array".into(),
            ))
        }
    };
    Ok((label, children))
}

fn from_nested(root: &Value) -> Result<LabeledTree, TreeError> {
    let mut labels = Vec::new();
    let mut children: Vec<Vec<usize>> = Vec::new();
    let mut stack: Vec<(&Value, Option<usize>)> = vec![(root, None)];
    while let Some((value, parent)) = stack.pop() {
        let (label, kids) = node_fields(value)?;
        labels.push(label.to_owned());
        children.push(Vec::new());
        let id = labels.len();
        if let Some(p) = parent {
            children[p - 1].push(id);
        }
        stack.extend(kids.iter().rev().map(|k| (k, Some(id))));
    }
    LabeledTree::from_parts(labels, children)
}

fn from_flat(nodes: &Value) -> Result<LabeledTree, TreeError> {
    let items = nodes
        .as_array()
        .ok_or_else(|| TreeError::MalformedDocument("\"nodes\" is not an array".into()))?;
    let count = items.len();
    let mut labels = Vec::with_capacity(count);
    let mut kids = Vec::with_capacity(count);
    let mut parent = vec![None; count];
    for (i, item) in items.iter().enumerate() {
        let (label, children) = node_fields(item)?;
        let mut idx = Vec::with_capacity(children.len());
        for c in children {
            let c = c.as_u64().map(|c| c as usize).ok_or_else(|| {
                TreeError::MalformedDocument("flat child reference is not an index".into())
            })?;
            if c >= count {
                return Err(TreeError::NotATree(format!("child index {c} out of range")));
            }
            if let Some(p) = parent[c] {
                return Err(TreeError::NotATree(format!(
                    "node {c} has two parents ({p} and {i})"
                )));
            }
            parent[c] = Some(i);
            idx.push(c);
        }
        labels.push(label);
        kids.push(idx);
    }
    let roots: Vec<usize> = (0..count).filter(|&i| parent[i].is_none()).collect();
    let root = match roots.as_slice() {
        [r] => *r,
        [] if count == 0 => return Err(TreeError::TooSmall(0)),
        [] => {
            return Err(TreeError::NotATree(
                "no root (every node has a parent)".into(),
            ))
        }
        _ => return Err(TreeError::NotATree(format!("{} roots", roots.len()))),
    };
    // Renumber in pre-order; a cycle shows up as a node reached twice or nodes never reached.
    let mut new_id = vec![0usize; count];
    let mut out_labels = Vec::with_capacity(count);
    let mut out_children: Vec<Vec<usize>> = Vec::with_capacity(count);
    let mut stack = vec![(root, None::<usize>)];
    while let Some((old, p)) = stack.pop() {
        if new_id[old] != 0 {
            return Err(TreeError::NotATree("cycle detected".into()));
        }
        out_labels.push(labels[old].to_owned());
        out_children.push(Vec::new());
        let id = out_labels.len();
        new_id[old] = id;
        if let Some(p) = p {
            out_children[p - 1].push(id);
        }
        stack.extend(kids[old].iter().rev().map(|&c| (c, Some(id))));
    }
    if out_labels.len() != count {
        return Err(TreeError::NotATree(
            "orphan nodes unreachable from the root".into(),
        ));
    }
    LabeledTree::from_parts(out_labels, out_children)
}
