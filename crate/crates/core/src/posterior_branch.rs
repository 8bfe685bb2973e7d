//! Branch-count model: a Poisson prior on the branching factor of every node
//! and a symmetric Dirichlet over each internal node's branch probabilities,
//! integrated out per node. Optionally regularizes the number of distinct
//! features used.

use serde::{Deserialize, Serialize};

use crate::data::{ConfigCounts, Dataset};
use crate::error::{Error, Result};
use crate::posterior_leaf::check_stats;
use crate::special::{ln_binomial, ln_factorial, ln_multi_beta, volume_penalty};
use crate::stats::LeafStats;
use crate::tree::{leaf_counts_from, Tree};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchModelHyper {
    /// Poisson mean of the per-node branch count.
    pub lambda: f64,
    pub alpha: f64,
    /// Feature-usage regularizer in (0, 1); off when `None`.
    pub gamma: Option<f64>,
}

impl BranchModelHyper {
    pub fn new(lambda: f64, alpha: f64, gamma: Option<f64>) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be > 0, got {}", lambda)));
        }
        if !(alpha >= 1.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be >= 1, got {}", alpha)));
        }
        if let Some(g) = gamma {
            if !(g > 0.0 && g < 1.0) {
                return Err(Error::InvalidArgument(format!("gamma must be in (0, 1), got {}", g)));
            }
        }
        Ok(BranchModelHyper {
            lambda,
            alpha,
            gamma,
        })
    }
}

impl Default for BranchModelHyper {
    fn default() -> Self {
        BranchModelHyper {
            lambda: 2.0,
            alpha: 2.0,
            gamma: None,
        }
    }
}

/// Number of points passing through every node, indexed by node id.
pub fn internal_node_counts(tree: &Tree, data: &Dataset) -> Vec<u64> {
    node_counts_from(tree, &data.config_counts())
}

pub fn node_counts_from(tree: &Tree, data: &ConfigCounts) -> Vec<u64> {
    let mut counts = vec![0u64; tree.len()];
    for (point, w) in &data.points {
        for id in tree.path_of(point) {
            counts[id] += w;
        }
    }
    counts
}

/// `ln C(p, d) + d ln g + (p - d) ln(1 - g)`.
pub fn feature_usage_term(p: usize, d: usize, gamma: f64) -> f64 {
    ln_binomial(p as u64, d as u64) + d as f64 * gamma.ln() + (p - d) as f64 * (1.0 - gamma).ln()
}

/// Unnormalized log-posterior of a tree under the branch-count model:
///
/// `-lambda(|I| + |L|) + (|L| + |I| - 1) ln lambda
///  + sum_i [-ln b_i! + ln B(a + n_c1, ..) - ln B(a, .., a)] - sum_l n_l ln V_l`
///
/// plus the feature-usage term when `gamma` is set.
pub fn log_posterior_branch(
    tree: &Tree,
    node_counts: &[u64],
    stats: &LeafStats,
    hyper: &BranchModelHyper,
) -> Result<f64> {
    check_stats(tree, stats)?;
    if node_counts.len() != tree.len() {
        return Err(Error::Inconsistent(format!(
            "{} node counts for a tree of {} nodes",
            node_counts.len(),
            tree.len()
        )));
    }
    if node_counts[Tree::ROOT] != stats.n {
        return Err(Error::Inconsistent("root count differs from n".into()));
    }
    for id in tree.internal_nodes() {
        let child_sum: u64 = tree.node(id).children().map(|c| node_counts[c]).sum();
        if child_sum != node_counts[id] {
            return Err(Error::Inconsistent(format!(
                "children of node {} hold {} points, node holds {}",
                id, child_sum, node_counts[id]
            )));
        }
    }
    for l in &stats.leaves {
        if node_counts[l.id] != l.count {
            return Err(Error::Inconsistent(format!("leaf {} count mismatch", l.id)));
        }
    }
    Ok(score_counts(tree, node_counts, stats, hyper))
}

pub(crate) fn score_counts(
    tree: &Tree,
    node_counts: &[u64],
    stats: &LeafStats,
    hyper: &BranchModelHyper,
) -> f64 {
    let lambda = hyper.lambda;
    let a = hyper.alpha;
    let internal = tree.internal_nodes();
    let n_internal = internal.len() as f64;
    let n_leaves = stats.leaves.len() as f64;
    let mut total = -lambda * (n_internal + n_leaves) + (n_leaves + n_internal - 1.0) * lambda.ln();
    for id in internal {
        let node = tree.node(id);
        let b = node.children().count();
        total += -ln_factorial(b as u64)
            + ln_multi_beta(node.children().map(|c| a + node_counts[c] as f64))
            - ln_multi_beta(std::iter::repeat_n(a, b));
    }
    total += volume_penalty(stats.leaves.iter().map(|l| (l.count, l.volume)));
    if let Some(g) = hyper.gamma {
        total += feature_usage_term(tree.num_features(), tree.features_used().len(), g);
    }
    total
}

/// Scores trees against fixed data under the branch-count model.
#[derive(Debug, Clone)]
pub struct BranchObjective {
    pub hyper: BranchModelHyper,
    data: ConfigCounts,
}

impl BranchObjective {
    pub fn new(hyper: BranchModelHyper, data: ConfigCounts) -> Self {
        BranchObjective { hyper, data }
    }
}

impl crate::anneal::TreeObjective for BranchObjective {
    fn score(&self, tree: &Tree) -> f64 {
        let counts = node_counts_from(tree, &self.data);
        let stats = leaf_counts_from(tree, &self.data);
        score_counts(tree, &counts, &stats, &self.hyper)
    }
}
