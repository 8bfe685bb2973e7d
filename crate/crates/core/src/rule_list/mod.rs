//! Density rule lists: ordered antecedents with first-match semantics and a
//! default leaf.

mod antecedent;
mod diagnostics;
mod mcmc;
mod posterior;
mod volume;

pub use antecedent::{antecedent_count, mine_antecedents, Antecedent, AntecedentUniverse};
pub use diagnostics::{gelman_rubin, potential_scale_reduction};
pub use mcmc::{mcmc_search, ListFit, McmcConfig};
pub use posterior::{
    log_posterior_list, log_prior_list, sample_prior_list, ListModelHyper, ListObjective,
    TRUNCATION_SWITCH,
};
pub use volume::{
    conjunction_volume, list_leaf_volume, list_volumes, volume_by_enumeration, VolumeCache,
    ENUMERATION_LIMIT, INCLUSION_EXCLUSION_MAX_TERMS_LOG2,
};

use serde::{Deserialize, Serialize};

use crate::data::ConfigCounts;
use crate::stats::{LeafStat, LeafStats};

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RuleList {
    pub rules: Vec<Antecedent>,
}

impl RuleList {
    pub fn new(rules: Vec<Antecedent>) -> Self {
        RuleList { rules }
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Leaf of `point`: `j` for the first rule `a_j` (1-based) it satisfies,
    /// 0 (the default leaf) if none.
    pub fn assign(&self, point: &[u32]) -> usize {
        self.rules
            .iter()
            .position(|a| a.matches(point))
            .map_or(0, |i| i + 1)
    }
}

/// Per-leaf statistics, ids 0 (default) through m, given leaf volumes in the
/// same order.
pub fn list_stats(list: &RuleList, data: &ConfigCounts, volumes: &[u64]) -> LeafStats {
    debug_assert_eq!(volumes.len(), list.len() + 1);
    let mut counts = vec![0u64; list.len() + 1];
    for (point, w) in &data.points {
        counts[list.assign(point)] += w;
    }
    LeafStats::new(
        data.n,
        (0..=list.len())
            .map(|l| LeafStat::new(l, counts[l], volumes[l], data.n))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::Schema;

    #[test]
    fn first_match_agrees_with_scan() {
        let s = Schema::with_cardinalities(&[2, 3, 2]).unwrap();
        let list = RuleList::new(vec![
            Antecedent::new(vec![(1, 2)]).unwrap(),
            Antecedent::new(vec![(0, 1), (2, 0)]).unwrap(),
            Antecedent::new(vec![(1, 2), (2, 1)]).unwrap(),
        ]);
        let mut p = [0u32; 3];
        for i in 0..s.domain_size() {
            s.point_at(i, &mut p);
            let mut expected = 0;
            for (j, a) in list.rules.iter().enumerate() {
                if a.conditions().iter().all(|&(f, v)| p[f] == v) {
                    expected = j + 1;
                    break;
                }
            }
            assert_eq!(list.assign(&p), expected);
        }
    }
}
