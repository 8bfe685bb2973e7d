//! Full-histogram baseline and the fixed synthetic datasets.

use std::collections::HashMap;
use std::sync::Arc;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::evaluation::{Cell, DensityModel};
use crate::schema::{FeatureSpec, Schema};
use crate::stats::LeafStat;
use crate::tree::{value_set, Tree};

/// One unit-volume bin per observed configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct FullHistogram {
    n: u64,
    domain_size: u64,
    bins: Vec<(Vec<u32>, u64)>,
    index: HashMap<Vec<u32>, usize>,
}

pub fn fit_full_histogram(data: &Dataset) -> Result<FullHistogram> {
    if data.is_empty() {
        return Err(Error::Data("empty dataset".into()));
    }
    let counts = data.config_counts();
    let index = counts
        .points
        .iter()
        .enumerate()
        .map(|(i, (p, _))| (p.clone(), i))
        .collect();
    Ok(FullHistogram {
        n: counts.n,
        domain_size: data.schema().domain_size(),
        bins: counts.points,
        index,
    })
}

impl FullHistogram {
    /// Observed configurations with their counts, in lexicographic order.
    pub fn bins(&self) -> &[(Vec<u32>, u64)] {
        &self.bins
    }

    pub fn num_bins(&self) -> usize {
        self.bins.len()
    }
}

impl DensityModel for FullHistogram {
    fn n_train(&self) -> u64 {
        self.n
    }

    fn cells(&self) -> Vec<LeafStat> {
        self.bins
            .iter()
            .enumerate()
            .map(|(i, (_, c))| LeafStat::new(i, *c, 1, self.n))
            .collect()
    }

    /// Every domain configuration is a bin for smoothing purposes.
    fn num_bins(&self) -> u64 {
        self.domain_size
    }

    fn locate(&self, point: &[u32]) -> Cell {
        Cell {
            count: self.index.get(point).map_or(0, |&i| self.bins[i].1),
            volume: 1,
        }
    }
}

fn binary_schema() -> Schema {
    Schema::with_cardinalities(&[2, 2, 2]).expect("valid schema")
}

/// The 1000-point sparse-tree dataset over three binary features with
/// values labelled "1" and "2", rows sorted by configuration.
pub fn gen_sparse_tree_dataset() -> Dataset {
    let schema = Arc::new(binary_schema());
    let blocks: [([u32; 3], usize); 5] = [
        ([0, 1, 0], 100),
        ([0, 1, 1], 100),
        ([1, 0, 0], 100),
        ([1, 0, 1], 400),
        ([1, 1, 1], 300),
    ];
    let rows = blocks
        .iter()
        .flat_map(|(p, k)| std::iter::repeat_n(p.to_vec(), *k))
        .collect();
    Dataset::new(schema, rows).expect("fixed rows are valid")
}

/// The six-leaf tree that generated the sparse-tree data: split on x1,
/// then x2, then x3 everywhere except under x1 = 1.
pub fn sparse_tree_ground_truth() -> Tree {
    let s = binary_schema();
    let mut t = Tree::root_only(&s);
    let halves = || vec![value_set(2, [0]), value_set(2, [1])];
    t.split_leaf(Tree::ROOT, 0, halves()).expect("valid split");
    for x1 in 0..2u32 {
        let leaf = t.assign_leaf(&[x1, 0, 0]);
        t.split_leaf(leaf, 1, halves()).expect("valid split");
    }
    for x2 in 0..2u32 {
        let leaf = t.assign_leaf(&[1, x2, 0]);
        t.split_leaf(leaf, 2, halves()).expect("valid split");
    }
    t
}

/// One point at each integer 1..=100 on a single ordinal feature.
pub fn gen_extreme_uniform() -> Dataset {
    let labels = (1..=100).map(|i| i.to_string()).collect();
    let schema = Schema::new(vec![FeatureSpec::new("x1", labels, true)]).expect("valid schema");
    Dataset::new(Arc::new(schema), (0..100).map(|v| vec![v]).collect()).expect("valid rows")
}
