//! Generalization hierarchies ("g-trees") for categorical quasi-identifiers.
//!
//! Every node carries a geometric size: 0.0 at the leaves, non-decreasing
//! towards the root. Generalizing an equivalence class to a node costs that
//! node's size relative to the root's, which is what the categorical RILM
//! formula consumes.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nested config representation: one record per node.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GTreeSpec {
    pub label: String,
    pub size: f64,
    #[serde(default)]
    pub children: Vec<GTreeSpec>,
}

#[derive(Debug, Clone)]
struct Node {
    label: String,
    size: f64,
    parent: Option<usize>,
    children: Vec<usize>,
    depth: usize,
}

/// A generalization hierarchy over one categorical column.
///
/// Leaf labels are the column's category tokens (case-sensitive, exact
/// match); internal labels may repeat, leaf labels may not.
#[derive(Debug, Clone)]
pub struct GTree {
    nodes: Vec<Node>,
    leaf_index: HashMap<String, usize>,
}

/// A node reference returned by lookups.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeRef<'a> {
    pub index: usize,
    pub label: &'a str,
    pub size: f64,
}

/// One violated g-tree invariant, reported by [`GTree::validate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum GTreeViolation {
    LeafSizeNonZero { label: String, size: f64 },
    DecreasingPath { child: String, child_size: f64, parent: String, parent_size: f64 },
    DuplicateLeaf { label: String },
}

impl GTree {
    /// Build from a nested spec. Fails on duplicate leaf labels or an empty
    /// tree; size-monotonicity problems are reported by [`GTree::validate`]
    /// instead so a loaded tree can be inspected.
    pub fn from_spec(spec: &GTreeSpec) -> Result<Self> {
        let mut nodes = Vec::new();
        build_nodes(spec, None, 0, &mut nodes);
        let mut leaf_index = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if n.children.is_empty() && leaf_index.insert(n.label.clone(), i).is_some() {
                return Err(Error::Construction(format!("duplicate leaf label '{}'", n.label)));
            }
        }
        if nodes.is_empty() {
            return Err(Error::Construction("empty g-tree".to_string()));
        }
        Ok(Self { nodes, leaf_index })
    }

    /// Depth-2 tree: root `*` of size `root_size`, one size-0 leaf per value.
    pub fn flat(values: &[String], root_size: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Construction("flat g-tree needs at least one value".to_string()));
        }
        if root_size <= 0.0 {
            return Err(Error::Construction(format!("root size must be positive, got {root_size}")));
        }
        let mut sorted: Vec<String> = values.to_vec();
        sorted.sort();
        sorted.dedup();
        let spec = GTreeSpec {
            label: "*".to_string(),
            size: root_size,
            children: sorted
                .into_iter()
                .map(|v| GTreeSpec { label: v, size: 0.0, children: Vec::new() })
                .collect(),
        };
        Self::from_spec(&spec)
    }

    pub fn root(&self) -> NodeRef<'_> {
        self.node_ref(0)
    }

    pub fn root_size(&self) -> f64 {
        self.nodes[0].size
    }

    pub fn n_leaves(&self) -> usize {
        self.leaf_index.len()
    }

    pub fn leaf_labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = self.leaf_index.keys().cloned().collect();
        labels.sort();
        labels
    }

    fn node_ref(&self, index: usize) -> NodeRef<'_> {
        let n = &self.nodes[index];
        NodeRef { index, label: &n.label, size: n.size }
    }

    /// Node by arena index, as handed out by earlier lookups.
    pub fn node(&self, index: usize) -> Result<NodeRef<'_>> {
        if index >= self.nodes.len() {
            return Err(Error::Lookup(format!("node index {index} out of range")));
        }
        Ok(self.node_ref(index))
    }

    pub fn leaf(&self, token: &str) -> Result<NodeRef<'_>> {
        let &i = self
            .leaf_index
            .get(token)
            .ok_or_else(|| Error::Lookup(format!("token '{token}' is not a leaf of the g-tree")))?;
        Ok(self.node_ref(i))
    }

    fn lca2(&self, a: usize, b: usize) -> usize {
        let (mut a, mut b) = (a, b);
        while self.nodes[a].depth > self.nodes[b].depth {
            a = self.nodes[a].parent.expect("non-root node has a parent");
        }
        while self.nodes[b].depth > self.nodes[a].depth {
            b = self.nodes[b].parent.expect("non-root node has a parent");
        }
        while a != b {
            a = self.nodes[a].parent.expect("non-root node has a parent");
            b = self.nodes[b].parent.expect("non-root node has a parent");
        }
        a
    }

    /// Lowest common ancestor node covering all `tokens`. A single token
    /// returns its leaf.
    pub fn lca<I, S>(&self, tokens: I) -> Result<NodeRef<'_>>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut current: Option<usize> = None;
        for t in tokens {
            let leaf = self.leaf(t.as_ref())?.index;
            current = Some(match current {
                None => leaf,
                Some(c) => self.lca2(c, leaf),
            });
        }
        current
            .map(|i| self.node_ref(i))
            .ok_or_else(|| Error::Lookup("lca of an empty token set".to_string()))
    }

    /// LCA of a leaf token and an arbitrary node (used when measuring the
    /// distance from a row to an already-generalized class).
    pub fn lca_with_node(&self, token: &str, node_index: usize) -> Result<NodeRef<'_>> {
        let leaf = self.leaf(token)?.index;
        Ok(self.node_ref(self.lca2(leaf, node_index)))
    }

    /// Normalized distance between two tokens: size of their lca over the
    /// root size (0 when the root size is 0).
    pub fn distance(&self, a: &str, b: &str) -> Result<f64> {
        if a == b {
            // same leaf, no generalization needed
            self.leaf(a)?;
            return Ok(0.0);
        }
        let l = self.lca([a, b])?;
        Ok(if self.root_size() > 0.0 { l.size / self.root_size() } else { 0.0 })
    }

    /// Report every violated invariant; an empty report means valid.
    pub fn validate(&self) -> Vec<GTreeViolation> {
        let mut violations = Vec::new();
        let mut leaf_seen: HashMap<&str, usize> = HashMap::new();
        for n in &self.nodes {
            if n.children.is_empty() {
                *leaf_seen.entry(n.label.as_str()).or_insert(0) += 1;
                if n.size != 0.0 {
                    violations.push(GTreeViolation::LeafSizeNonZero { label: n.label.clone(), size: n.size });
                }
            }
            for &c in &n.children {
                if self.nodes[c].size > n.size {
                    violations.push(GTreeViolation::DecreasingPath {
                        child: self.nodes[c].label.clone(),
                        child_size: self.nodes[c].size,
                        parent: n.label.clone(),
                        parent_size: n.size,
                    });
                }
            }
        }
        for (label, count) in leaf_seen {
            if count > 1 {
                violations.push(GTreeViolation::DuplicateLeaf { label: label.to_string() });
            }
        }
        violations
    }
}

fn build_nodes(spec: &GTreeSpec, parent: Option<usize>, depth: usize, nodes: &mut Vec<Node>) -> usize {
    let index = nodes.len();
    nodes.push(Node {
        label: spec.label.clone(),
        size: spec.size,
        parent,
        children: Vec::new(),
        depth,
    });
    for child in &spec.children {
        let ci = build_nodes(child, Some(index), depth + 1, nodes);
        nodes[index].children.push(ci);
    }
    index
}

/// The three-value example tree used throughout the docs and tests:
/// root `*` (100.0) over `foobar` (10.0) over leaves `foo`, `bar`,
/// plus leaf `test` directly under the root.
pub fn example_tree() -> GTree {
    GTree::from_spec(&GTreeSpec {
        label: "*".to_string(),
        size: 100.0,
        children: vec![
            GTreeSpec {
                label: "foobar".to_string(),
                size: 10.0,
                children: vec![
                    GTreeSpec { label: "foo".to_string(), size: 0.0, children: vec![] },
                    GTreeSpec { label: "bar".to_string(), size: 0.0, children: vec![] },
                ],
            },
            GTreeSpec { label: "test".to_string(), size: 0.0, children: vec![] },
        ],
    })
    .expect("example tree is well-formed")
}
