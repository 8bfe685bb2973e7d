//! Per-leaf statistics shared by trees, rule lists and histograms.

use serde::{Deserialize, Serialize};

/// Count, volume and density of one leaf. `id` is the tree node id, or the
/// leaf position for rule lists (0 is the default leaf).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafStat {
    pub id: usize,
    pub count: u64,
    pub volume: u64,
    pub density: f64,
}

impl LeafStat {
    pub fn new(id: usize, count: u64, volume: u64, n: u64) -> Self {
        LeafStat {
            id,
            count,
            volume,
            density: leaf_density(count, volume, n),
        }
    }

    pub fn log_volume(&self) -> f64 {
        (self.volume as f64).ln()
    }
}

/// `count / (n * volume)`; zero for empty leaves.
pub fn leaf_density(count: u64, volume: u64, n: u64) -> f64 {
    if count == 0 {
        0.0
    } else {
        count as f64 / (n as f64 * volume as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafStats {
    pub n: u64,
    pub leaves: Vec<LeafStat>,
}

impl LeafStats {
    pub fn new(n: u64, leaves: Vec<LeafStat>) -> Self {
        LeafStats { n, leaves }
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    pub fn by_id(&self, id: usize) -> Option<&LeafStat> {
        self.leaves
            .binary_search_by_key(&id, |l| l.id)
            .ok()
            .map(|i| &self.leaves[i])
    }

    pub fn total_count(&self) -> u64 {
        self.leaves.iter().map(|l| l.count).sum()
    }

    pub fn total_volume(&self) -> u64 {
        self.leaves.iter().map(|l| l.volume).sum()
    }

    /// `sum f_l V_l`; 1 whenever `n > 0`.
    pub fn mass(&self) -> f64 {
        self.leaves.iter().map(|l| l.density * l.volume as f64).sum()
    }

    /// Training log-likelihood `sum n_l ln f_l`.
    pub fn log_likelihood(&self) -> f64 {
        self.leaves
            .iter()
            .filter(|l| l.count > 0)
            .map(|l| l.count as f64 * l.density.ln())
            .sum()
    }

    pub fn nonempty(&self) -> usize {
        self.leaves.iter().filter(|l| l.count > 0).count()
    }
}
