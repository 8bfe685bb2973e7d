//! Leaf-count model: Poisson prior on the number of leaves, symmetric
//! Dirichlet over leaf masses integrated out in closed form.

use serde::{Deserialize, Serialize};

use crate::data::ConfigCounts;
use crate::error::{Error, Result};
use crate::special::{ln_gamma, ln_poisson, volume_penalty};
use crate::stats::LeafStats;
use crate::tree::{leaf_counts_from, Tree};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafModelHyper {
    /// Poisson mean over the number of leaves.
    pub lambda: f64,
    /// Symmetric Dirichlet concentration. Values in [1, inf) are accepted;
    /// with alpha = 1 every `ln G(alpha)` term vanishes.
    pub alpha: f64,
}

impl LeafModelHyper {
    pub fn new(lambda: f64, alpha: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be > 0, got {}", lambda)));
        }
        if !(alpha >= 1.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be >= 1, got {}", alpha)));
        }
        Ok(LeafModelHyper { lambda, alpha })
    }
}

impl Default for LeafModelHyper {
    fn default() -> Self {
        LeafModelHyper {
            lambda: 5.0,
            alpha: 2.0,
        }
    }
}

pub(crate) fn check_stats(tree: &Tree, stats: &LeafStats) -> Result<()> {
    let leaves = tree.leaves();
    if leaves.len() != stats.leaves.len() {
        return Err(Error::Inconsistent(format!(
            "tree has {} leaves, stats have {}",
            leaves.len(),
            stats.leaves.len()
        )));
    }
    for (&id, s) in leaves.iter().zip(&stats.leaves) {
        if s.id != id || s.volume != tree.node(id).volume() {
            return Err(Error::Inconsistent(format!(
                "stats entry for leaf {} does not match the tree",
                id
            )));
        }
    }
    if stats.total_count() != stats.n {
        return Err(Error::Inconsistent(format!(
            "leaf counts sum to {}, n = {}",
            stats.total_count(),
            stats.n
        )));
    }
    Ok(())
}

/// Unnormalized log-posterior of a tree under the leaf-count model:
///
/// `ln Poisson(K; lambda) + ln G(K a) - ln G(n + K a)
///  + sum_l [ln G(n_l + a) - ln G(a)] - sum_l n_l ln V_l`
pub fn log_posterior_leaf(tree: &Tree, stats: &LeafStats, hyper: &LeafModelHyper) -> Result<f64> {
    check_stats(tree, stats)?;
    Ok(score_stats(stats, hyper))
}

pub(crate) fn score_stats(stats: &LeafStats, hyper: &LeafModelHyper) -> f64 {
    let k = stats.leaves.len() as u64;
    let a = hyper.alpha;
    let ka = k as f64 * a;
    let dirichlet: f64 = stats
        .leaves
        .iter()
        .map(|l| ln_gamma(l.count as f64 + a) - ln_gamma(a))
        .sum();
    ln_poisson(k, hyper.lambda) + ln_gamma(ka) - ln_gamma(stats.n as f64 + ka)
        + dirichlet
        + volume_penalty(stats.leaves.iter().map(|l| (l.count, l.volume)))
}

/// Scores trees against fixed data under the leaf-count model.
#[derive(Debug, Clone)]
pub struct LeafObjective {
    pub hyper: LeafModelHyper,
    data: ConfigCounts,
}

impl LeafObjective {
    pub fn new(hyper: LeafModelHyper, data: ConfigCounts) -> Self {
        LeafObjective { hyper, data }
    }
}

impl crate::anneal::TreeObjective for LeafObjective {
    fn score(&self, tree: &Tree) -> f64 {
        score_stats(&leaf_counts_from(tree, &self.data), &self.hyper)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use crate::schema::Schema;
    use crate::tree::leaf_counts;
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    fn binary_split(n1: usize, n2: usize) -> (Tree, LeafStats) {
        let s = Arc::new(Schema::with_cardinalities(&[2]).unwrap());
        let rows = std::iter::repeat_n(vec![0], n1)
            .chain(std::iter::repeat_n(vec![1], n2))
            .collect();
        let d = Dataset::new(Arc::clone(&s), rows).unwrap();
        let mut t = Tree::root_only(&s);
        t.full_split(0, 0).unwrap();
        let stats = leaf_counts(&t, &d);
        (t, stats)
    }

    #[test]
    fn root_only_closed_form() {
        let s = Arc::new(Schema::with_cardinalities(&[4]).unwrap());
        let d = Dataset::new(Arc::clone(&s), (0..10).map(|i| vec![i % 4]).collect()).unwrap();
        let t = Tree::root_only(&s);
        let stats = leaf_counts(&t, &d);
        for alpha in [1.0, 2.0, 3.5] {
            let h = LeafModelHyper::new(5.0, alpha).unwrap();
            let v = log_posterior_leaf(&t, &stats, &h).unwrap();
            assert_abs_diff_eq!(v, -17.253506, epsilon = 1e-6);
            assert_abs_diff_eq!(v, -5.0 + 5f64.ln() - 10.0 * 4f64.ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn two_leaf_closed_form() {
        let (t, stats) = binary_split(3, 7);
        let h = LeafModelHyper::new(2.0, 2.0).unwrap();
        let v = log_posterior_leaf(&t, &stats, &h).unwrap();
        let expected = (2.0 * (-2f64).exp()).ln() + ln_gamma(4.0) - ln_gamma(14.0) + ln_gamma(5.0)
            - ln_gamma(2.0)
            + ln_gamma(9.0)
            - ln_gamma(2.0);
        assert_abs_diff_eq!(v, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(v, -8.2846, epsilon = 1e-4);
    }

    #[test]
    fn integer_alpha_matches_factorial_form() {
        let (t, stats) = binary_split(3, 7);
        let h = LeafModelHyper::new(2.0, 3.0).unwrap();
        let v = log_posterior_leaf(&t, &stats, &h).unwrap();
        let fact = |k: u64| (1..=k).map(|i| (i as f64).ln()).sum::<f64>();
        // Poisson(2; 2) * G(6)/G(16) * (5!/2!) * (9!/2!)
        let expected = (2.0 * (-2f64).exp()).ln() + fact(5) - fact(15) + fact(5) - fact(2) + fact(9)
            - fact(2);
        assert_abs_diff_eq!(v, expected, epsilon = 1e-10);
    }

    #[test]
    fn rejects_mismatched_stats() {
        let (t, mut stats) = binary_split(3, 7);
        let h = LeafModelHyper::default();
        stats.leaves.pop();
        assert!(matches!(log_posterior_leaf(&t, &stats, &h), Err(Error::Inconsistent(_))));
        let (_, stats2) = binary_split(3, 7);
        let s = Schema::with_cardinalities(&[2]).unwrap();
        assert!(log_posterior_leaf(&Tree::root_only(&s), &stats2, &h).is_err());
    }

    #[test]
    fn permuting_leaves_keeps_score() {
        let (_, stats) = binary_split(4, 9);
        let h = LeafModelHyper::new(3.0, 2.0).unwrap();
        let mut rev = stats.clone();
        rev.leaves.reverse();
        assert_abs_diff_eq!(score_stats(&stats, &h), score_stats(&rev, &h), epsilon = 1e-12);
    }

    #[test]
    fn empty_carved_leaf_lowers_score() {
        // All points have x1 = 0, so the x1 = 1 leaf is empty; splitting it on
        // x2 adds an empty unit-volume leaf and leaves every count unchanged.
        let s = Arc::new(Schema::with_cardinalities(&[2, 2]).unwrap());
        let rows = vec![vec![0, 0], vec![0, 0], vec![0, 1]];
        let d = Dataset::new(Arc::clone(&s), rows).unwrap();
        let mut a = Tree::root_only(&s);
        a.full_split(0, 0).unwrap();
        let mut b = a.clone();
        let empty = b.assign_leaf(&[1, 0]);
        b.full_split(empty, 1).unwrap();
        let sa = leaf_counts(&a, &d);
        let sb = leaf_counts(&b, &d);
        assert_eq!(sb.leaves.iter().filter(|l| l.count == 0 && l.volume == 1).count(), 2);
        for lambda in [0.5, 1.0, 1.9] {
            let h = LeafModelHyper::new(lambda, 2.0).unwrap();
            let va = log_posterior_leaf(&a, &sa, &h).unwrap();
            let vb = log_posterior_leaf(&b, &sb, &h).unwrap();
            assert!(vb < va, "lambda {lambda}: {vb} !< {va}");
        }
    }

    #[test]
    fn hyper_validation() {
        assert!(LeafModelHyper::new(0.0, 2.0).is_err());
        assert!(LeafModelHyper::new(1.0, 0.5).is_err());
        assert!(LeafModelHyper::new(1.0, 1.0).is_ok());
    }
}
