//! Cascaded trees over a categorical domain.
//!
//! A tree is stored as an arena in canonical preorder: node 0 is the root and
//! the branches of every internal node are sorted by their smallest category
//! index. Every structural edit re-canonicalizes, so two trees with the same
//! shape compare equal with `==` and hash identically.

use std::collections::BTreeSet;
use std::sync::Arc;

use fixedbitset::FixedBitSet;

use crate::data::{ConfigCounts, Dataset};
use crate::error::{Error, Result};
use crate::schema::Schema;
use crate::stats::{LeafStat, LeafStats};

pub type NodeId = usize;

/// Set of category indices of one feature.
pub type ValueSet = FixedBitSet;

pub fn value_set(q: usize, values: impl IntoIterator<Item = usize>) -> ValueSet {
    let mut s = FixedBitSet::with_capacity(q);
    for v in values {
        s.insert(v);
    }
    s
}

pub fn full_set(q: usize) -> ValueSet {
    let mut s = FixedBitSet::with_capacity(q);
    s.insert_range(..);
    s
}

/// True when the set bits form one run of consecutive indices.
pub fn is_contiguous(s: &ValueSet) -> bool {
    match (s.minimum(), s.maximum()) {
        (Some(lo), Some(hi)) => s.count_ones(..) == hi - lo + 1,
        _ => false,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Branch {
    pub values: ValueSet,
    pub child: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Split {
    pub feature: usize,
    pub branches: Vec<Branch>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Node {
    parent: Option<NodeId>,
    depth: usize,
    sigma: Vec<ValueSet>,
    split: Option<Split>,
}

impl Node {
    pub fn parent(&self) -> Option<NodeId> {
        self.parent
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Allowed values of every feature at this node.
    pub fn sigma(&self) -> &[ValueSet] {
        &self.sigma
    }

    pub fn split(&self) -> Option<&Split> {
        self.split.as_ref()
    }

    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }

    pub fn children(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.split.iter().flat_map(|s| s.branches.iter().map(|b| b.child))
    }

    pub fn volume(&self) -> u64 {
        self.sigma.iter().map(|s| s.count_ones(..) as u64).product()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Tree {
    nodes: Vec<Node>,
    ordinal: Arc<[bool]>,
}

impl Tree {
    pub const ROOT: NodeId = 0;

    pub fn root_only(schema: &Schema) -> Tree {
        let ordinal: Vec<bool> = (0..schema.num_features()).map(|j| schema.is_ordinal(j)).collect();
        Tree::root_only_with(&schema.cardinalities(), &ordinal)
    }

    pub fn root_only_with(cards: &[usize], ordinal: &[bool]) -> Tree {
        assert_eq!(cards.len(), ordinal.len());
        Tree {
            nodes: vec![Node {
                parent: None,
                depth: 0,
                sigma: cards.iter().map(|&q| full_set(q)).collect(),
                split: None,
            }],
            ordinal: ordinal.into(),
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn num_features(&self) -> usize {
        self.ordinal.len()
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.nodes[Self::ROOT].sigma.iter().map(|s| s.len()).collect()
    }

    pub fn is_ordinal(&self, feature: usize) -> bool {
        self.ordinal[feature]
    }

    pub fn is_root_only(&self) -> bool {
        self.nodes.len() == 1
    }

    /// Leaf ids in preorder.
    pub fn leaves(&self) -> Vec<NodeId> {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].is_leaf()).collect()
    }

    pub fn internal_nodes(&self) -> Vec<NodeId> {
        (0..self.nodes.len()).filter(|&i| !self.nodes[i].is_leaf()).collect()
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn num_internal(&self) -> usize {
        self.nodes.len() - self.num_leaves()
    }

    pub fn max_depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Distinct features used as a split anywhere in the tree.
    pub fn features_used(&self) -> BTreeSet<usize> {
        self.nodes
            .iter()
            .filter_map(|n| n.split.as_ref().map(|s| s.feature))
            .collect()
    }

    /// Product of `|sigma_j|` over all features.
    pub fn leaf_volume(&self, leaf: NodeId) -> Result<u64> {
        let node = self
            .nodes
            .get(leaf)
            .ok_or_else(|| Error::InvalidArgument(format!("no node {}", leaf)))?;
        if !node.is_leaf() {
            return Err(Error::InvalidArgument(format!("node {} is internal", leaf)));
        }
        Ok(node.volume())
    }

    /// The unique leaf whose allowed sets contain `point`.
    pub fn assign_leaf(&self, point: &[u32]) -> NodeId {
        let mut id = Self::ROOT;
        while let Some(split) = &self.nodes[id].split {
            let v = point[split.feature] as usize;
            id = split
                .branches
                .iter()
                .find(|b| b.values.contains(v))
                .map(|b| b.child)
                .expect("branches partition the node's allowed values");
        }
        id
    }

    /// Every node whose root path `point` passes through, root first.
    pub fn path_of(&self, point: &[u32]) -> Vec<NodeId> {
        let mut path = vec![Self::ROOT];
        let mut id = Self::ROOT;
        while let Some(split) = &self.nodes[id].split {
            let v = point[split.feature] as usize;
            id = split
                .branches
                .iter()
                .find(|b| b.values.contains(v))
                .map(|b| b.child)
                .expect("branches partition the node's allowed values");
            path.push(id);
        }
        path
    }

    /// Turns `leaf` into an internal node with one child per part.
    pub fn split_leaf(&mut self, leaf: NodeId, feature: usize, parts: Vec<ValueSet>) -> Result<()> {
        let node = &self.nodes[leaf];
        if !node.is_leaf() {
            return Err(Error::InvalidArgument(format!("node {} is not a leaf", leaf)));
        }
        if feature >= self.num_features() {
            return Err(Error::InvalidArgument(format!("no feature {}", feature)));
        }
        if parts.len() < 2 {
            return Err(Error::InvalidArgument("a split needs at least two branches".into()));
        }
        let allowed = &node.sigma[feature];
        let mut union = FixedBitSet::with_capacity(allowed.len());
        for part in &parts {
            if part.len() != allowed.len() || part.is_clear() {
                return Err(Error::InvalidArgument("empty or mis-sized branch set".into()));
            }
            if !part.is_disjoint(&union) {
                return Err(Error::InvalidArgument("branch sets overlap".into()));
            }
            if self.ordinal[feature] && !is_contiguous(part) {
                return Err(Error::InvalidArgument(
                    "ordinal branch sets must be contiguous runs".into(),
                ));
            }
            union.union_with(part);
        }
        if &union != allowed {
            return Err(Error::InvalidArgument(
                "branch sets must partition the node's allowed values".into(),
            ));
        }
        let depth = node.depth + 1;
        let base_sigma = node.sigma.clone();
        let mut branches = Vec::with_capacity(parts.len());
        for part in parts {
            let mut sigma = base_sigma.clone();
            sigma[feature] = part.clone();
            let child = self.nodes.len();
            self.nodes.push(Node {
                parent: Some(leaf),
                depth,
                sigma,
                split: None,
            });
            branches.push(Branch { values: part, child });
        }
        self.nodes[leaf].split = Some(Split { feature, branches });
        self.canonicalize();
        Ok(())
    }

    /// Splits `leaf` into one branch per allowed value of `feature`.
    /// Returns `false` (tree untouched) when fewer than two values remain.
    pub fn full_split(&mut self, leaf: NodeId, feature: usize) -> Result<bool> {
        let allowed = &self.nodes[leaf].sigma[feature];
        if allowed.count_ones(..) < 2 {
            return Ok(false);
        }
        let q = allowed.len();
        let parts = allowed.ones().map(|v| value_set(q, [v])).collect();
        self.split_leaf(leaf, feature, parts)?;
        Ok(true)
    }

    /// Removes all descendants of `node`, leaving it a leaf.
    pub fn collapse(&mut self, node: NodeId) {
        if self.nodes[node].split.take().is_some() {
            self.canonicalize();
        }
    }

    /// Merges branches `a` and `b` of internal node `parent` into one leaf
    /// child. A parent left with a single branch becomes a leaf.
    pub fn merge_branches(&mut self, parent: NodeId, a: usize, b: usize) -> Result<()> {
        let node = &self.nodes[parent];
        let split = node
            .split
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("node {} is a leaf", parent)))?;
        if a == b || a >= split.branches.len() || b >= split.branches.len() {
            return Err(Error::InvalidArgument("invalid branch pair".into()));
        }
        let feature = split.feature;
        let mut merged = split.branches[a].values.clone();
        merged.union_with(&split.branches[b].values);
        if self.ordinal[feature] && !is_contiguous(&merged) {
            return Err(Error::InvalidArgument(
                "ordinal merge must join neighbouring runs".into(),
            ));
        }
        if split.branches.len() == 2 {
            self.collapse(parent);
            return Ok(());
        }
        let mut sigma = node.sigma.clone();
        sigma[feature] = merged.clone();
        let child = self.nodes.len();
        let depth = node.depth + 1;
        self.nodes.push(Node {
            parent: Some(parent),
            depth,
            sigma,
            split: None,
        });
        let split = self.nodes[parent].split.as_mut().unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        split.branches.remove(hi);
        split.branches[lo] = Branch {
            values: merged,
            child,
        };
        self.canonicalize();
        Ok(())
    }

    /// Rebuilds the arena in canonical preorder, dropping unreachable nodes.
    fn canonicalize(&mut self) {
        let mut old = std::mem::take(&mut self.nodes);
        let mut out: Vec<Node> = Vec::with_capacity(old.len());
        // (old id, new parent, depth)
        let mut stack = vec![(Self::ROOT, None::<NodeId>, 0usize)];
        while let Some((old_id, parent, depth)) = stack.pop() {
            let new_id = out.len();
            let mut node = Node {
                parent,
                depth,
                sigma: std::mem::take(&mut old[old_id].sigma),
                split: old[old_id].split.take(),
            };
            if let Some(split) = node.split.as_mut() {
                split.branches.sort_by_key(|b| b.values.minimum());
                for b in split.branches.iter().rev() {
                    stack.push((b.child, Some(new_id), depth + 1));
                }
            }
            if let Some(p) = parent {
                let split = out[p].split.as_mut().unwrap();
                let slot = split
                    .branches
                    .iter_mut()
                    .find(|b| b.child == old_id && b.values == node.sigma[split.feature])
                    .expect("child is referenced by its parent");
                slot.child = usize::MAX - new_id;
            }
            out.push(node);
        }
        for node in out.iter_mut() {
            if let Some(split) = node.split.as_mut() {
                for b in split.branches.iter_mut() {
                    b.child = usize::MAX - b.child;
                }
            }
        }
        self.nodes = out;
    }

    /// Allowed sets recomputed from the root path, ignoring the cache.
    pub fn recompute_sigmas(&self) -> Vec<Vec<ValueSet>> {
        let mut out: Vec<Vec<ValueSet>> = vec![Vec::new(); self.nodes.len()];
        out[Self::ROOT] = self.cardinalities().into_iter().map(full_set).collect();
        for id in 0..self.nodes.len() {
            if let Some(split) = &self.nodes[id].split {
                for b in &split.branches {
                    let mut s = out[id].clone();
                    s[split.feature].intersect_with(&b.values);
                    out[b.child] = s;
                }
            }
        }
        out
    }

    /// Full structural check; `Err` names the first violated invariant.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let recomputed = self.recompute_sigmas();
        for (id, node) in self.nodes.iter().enumerate() {
            if node.sigma != recomputed[id] {
                return Err(format!("node {} caches a stale allowed set", id));
            }
            if let Some(split) = &node.split {
                if split.branches.len() < 2 {
                    return Err(format!("node {} has fewer than two branches", id));
                }
                let allowed = &node.sigma[split.feature];
                let mut union = FixedBitSet::with_capacity(allowed.len());
                for b in &split.branches {
                    if b.values.is_clear() {
                        return Err(format!("node {} has an empty branch", id));
                    }
                    if !b.values.is_disjoint(&union) {
                        return Err(format!("node {} has overlapping branches", id));
                    }
                    if self.ordinal[split.feature] && !is_contiguous(&b.values) {
                        return Err(format!("node {} has a non-contiguous ordinal branch", id));
                    }
                    if self.nodes[b.child].parent != Some(id) {
                        return Err(format!("node {} has a wrong parent link", b.child));
                    }
                    union.union_with(&b.values);
                }
                if &union != allowed {
                    return Err(format!("node {} branches do not cover its allowed set", id));
                }
            }
        }
        Ok(())
    }
}

/// Per-leaf counts, volumes and densities from a dataset.
pub fn leaf_counts(tree: &Tree, data: &Dataset) -> LeafStats {
    leaf_counts_from(tree, &data.config_counts())
}

pub fn leaf_counts_from(tree: &Tree, data: &ConfigCounts) -> LeafStats {
    let mut counts = vec![0u64; tree.len()];
    for (point, w) in &data.points {
        counts[tree.assign_leaf(point)] += w;
    }
    let leaves = tree
        .leaves()
        .into_iter()
        .map(|id| LeafStat::new(id, counts[id], tree.node(id).volume(), data.n))
        .collect();
    LeafStats::new(data.n, leaves)
}

/// Density of the leaf that contains `point`.
pub fn density(tree: &Tree, stats: &LeafStats, point: &[u32]) -> f64 {
    let leaf = tree.assign_leaf(point);
    stats
        .by_id(leaf)
        .map(|s| s.density)
        .expect("stats computed from the same tree")
}
