//! Out-of-sample log-likelihood, the leave-one-out least-squares risk and
//! density equivalence, over any piecewise-constant model.

use std::fmt;

use serde::{Serialize, Serializer};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rule_list::{list_stats, list_volumes, RuleList};
use crate::schema::Schema;
use crate::stats::{LeafStat, LeafStats};
use crate::tree::{leaf_counts, Tree};

/// Training count and volume of the cell containing a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub count: u64,
    pub volume: u64,
}

/// A fitted piecewise-constant density.
pub trait DensityModel {
    fn n_train(&self) -> u64;

    /// Cells with training data, plus empty cells where the model has them.
    fn cells(&self) -> Vec<LeafStat>;

    /// Number of cells the smoothing prior spreads mass over.
    fn num_bins(&self) -> u64;

    fn locate(&self, point: &[u32]) -> Cell;

    /// `n_l / (n V_l)`.
    fn density(&self, point: &[u32]) -> f64 {
        let c = self.locate(point);
        crate::stats::leaf_density(c.count, c.volume, self.n_train())
    }

    /// Posterior-mean density `(n_l + a) / (n + K a) / V_l`.
    fn smoothed_density(&self, point: &[u32], alpha: f64) -> f64 {
        let c = self.locate(point);
        (c.count as f64 + alpha) / (self.n_train() as f64 + self.num_bins() as f64 * alpha) / c.volume as f64
    }
}

/// A log-likelihood that may be `-inf` when a test point lands in a cell
/// with zero estimated density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogLikelihood {
    Finite(f64),
    NegInfinity,
}

impl LogLikelihood {
    pub fn from_f64(x: f64) -> Self {
        if x == f64::NEG_INFINITY {
            LogLikelihood::NegInfinity
        } else {
            LogLikelihood::Finite(x)
        }
    }

    pub fn value(self) -> f64 {
        match self {
            LogLikelihood::Finite(x) => x,
            LogLikelihood::NegInfinity => f64::NEG_INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, LogLikelihood::Finite(_))
    }
}

impl PartialOrd for LogLikelihood {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        self.value().partial_cmp(&other.value())
    }
}

impl fmt::Display for LogLikelihood {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LogLikelihood::Finite(x) => write!(f, "{:.6}", x),
            LogLikelihood::NegInfinity => f.write_str("-inf"),
        }
    }
}

impl Serialize for LogLikelihood {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            LogLikelihood::Finite(x) => s.serialize_f64(*x),
            LogLikelihood::NegInfinity => s.serialize_str("-inf"),
        }
    }
}

/// `sum_i ln f(x_i)` over the test set; with `smoothing = Some(a)` the
/// posterior-mean densities are used instead of `n_l / (n V_l)`.
pub fn test_log_likelihood<M: DensityModel + ?Sized>(
    model: &M,
    test: &Dataset,
    smoothing: Option<f64>,
) -> LogLikelihood {
    let mut total = 0.0;
    for (point, w) in &test.config_counts().points {
        let f = match smoothing {
            Some(a) => model.smoothed_density(point, a),
            None => model.density(point),
        };
        if f <= 0.0 {
            return LogLikelihood::NegInfinity;
        }
        total += *w as f64 * f.ln();
    }
    LogLikelihood::Finite(total)
}

/// Leave-one-out least-squares risk estimate
/// `sum_l (n_l/n - 2 (n_l - 1)/(n - 1)) f_l`; more negative is better.
pub fn loo_least_squares<M: DensityModel + ?Sized>(model: &M) -> Result<f64> {
    let n = model.n_train();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "leave-one-out risk needs at least 2 training points, got {}",
            n
        )));
    }
    let (nf, n1) = (n as f64, (n - 1) as f64);
    Ok(model
        .cells()
        .iter()
        .filter(|c| c.count > 0)
        .map(|c| {
            let k = c.count as f64;
            (k / nf - 2.0 * (k - 1.0) / n1) * c.density
        })
        .sum())
}

/// Training log-likelihood of the histogram with one unit-volume bin per
/// distinct configuration: `sum_x n_x ln(n_x / n)`.
pub fn pointwise_histogram_log_likelihood(train: &Dataset) -> f64 {
    let counts = train.config_counts();
    let n = counts.n as f64;
    counts
        .points
        .iter()
        .map(|(_, w)| *w as f64 * (*w as f64 / n).ln())
        .sum()
}

/// Largest domain walked by [`densities_equivalent`].
pub const EQUIVALENCE_LIMIT: u64 = 1 << 20;

/// Whether two models assign the same density to every domain point,
/// compared exactly as rationals.
pub fn densities_equivalent<A, B>(a: &A, b: &B, schema: &Schema) -> Result<bool>
where
    A: DensityModel + ?Sized,
    B: DensityModel + ?Sized,
{
    schema.check_enumerable(EQUIVALENCE_LIMIT)?;
    let (na, nb) = (a.n_train() as u128, b.n_train() as u128);
    let mut point = vec![0u32; schema.num_features()];
    for i in 0..schema.domain_size() {
        schema.point_at(i, &mut point);
        let (ca, cb) = (a.locate(&point), b.locate(&point));
        // ca/(na Va) == cb/(nb Vb)
        if ca.count as u128 * nb * cb.volume as u128 != cb.count as u128 * na * ca.volume as u128 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// A tree with its training statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedTree {
    pub tree: Tree,
    pub stats: LeafStats,
}

impl FittedTree {
    pub fn new(tree: Tree, train: &Dataset) -> Self {
        let stats = leaf_counts(&tree, train);
        FittedTree { tree, stats }
    }
}

impl DensityModel for FittedTree {
    fn n_train(&self) -> u64 {
        self.stats.n
    }

    fn cells(&self) -> Vec<LeafStat> {
        self.stats.leaves.clone()
    }

    fn num_bins(&self) -> u64 {
        self.stats.leaves.len() as u64
    }

    fn locate(&self, point: &[u32]) -> Cell {
        let s = self
            .stats
            .by_id(self.tree.assign_leaf(point))
            .expect("stats cover every leaf");
        Cell {
            count: s.count,
            volume: s.volume,
        }
    }
}

/// A rule list with its training statistics (default leaf first).
#[derive(Debug, Clone, PartialEq)]
pub struct FittedList {
    pub list: RuleList,
    pub stats: LeafStats,
}

impl FittedList {
    pub fn new(list: RuleList, train: &Dataset) -> Result<Self> {
        let volumes = list_volumes(&list, train.schema(), None)?;
        let stats = list_stats(&list, &train.config_counts(), &volumes);
        Ok(FittedList { list, stats })
    }
}

impl DensityModel for FittedList {
    fn n_train(&self) -> u64 {
        self.stats.n
    }

    fn cells(&self) -> Vec<LeafStat> {
        self.stats.leaves.clone()
    }

    /// Shadowed rules hold no points and no volume, so only live leaves count.
    fn num_bins(&self) -> u64 {
        self.stats.leaves.iter().filter(|l| l.volume > 0).count() as u64
    }

    fn locate(&self, point: &[u32]) -> Cell {
        let s = &self.stats.leaves[self.list.assign(point)];
        Cell {
            count: s.count,
            volume: s.volume,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::test_support::split_at;
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    fn single_feature(q: usize, rows: &[u32]) -> Dataset {
        let s = Arc::new(Schema::with_cardinalities(&[q]).unwrap());
        Dataset::new(s, rows.iter().map(|&v| vec![v]).collect()).unwrap()
    }

    #[test]
    fn root_only_uniform() {
        let train = single_feature(100, &[0, 1, 2]);
        let test = single_feature(100, &(0..50).collect::<Vec<_>>());
        let m = FittedTree::new(Tree::root_only(train.schema()), &train);
        let ll = test_log_likelihood(&m, &test, None);
        assert_abs_diff_eq!(ll.value(), -230.258509, epsilon = 1e-6);
        assert_abs_diff_eq!(loo_least_squares(&m).unwrap(), -0.01, epsilon = 1e-15);
    }

    #[test]
    fn two_leaf_loo() {
        let rows: Vec<u32> = std::iter::repeat_n(0, 3).chain(std::iter::repeat_n(1, 7)).collect();
        let train = single_feature(2, &rows);
        let mut t = Tree::root_only(train.schema());
        t.full_split(0, 0).unwrap();
        let m = FittedTree::new(t, &train);
        let closed = loo_least_squares(&m).unwrap();
        assert_abs_diff_eq!(closed, -0.486667, epsilon = 1e-6);
        let definitional: f64 = m
            .stats
            .leaves
            .iter()
            .map(|l| l.density.powi(2) * l.volume as f64 - 2.0 * (l.count as f64 - 1.0) / 9.0 * l.density)
            .sum();
        assert_abs_diff_eq!(closed, definitional, epsilon = 1e-12);
    }

    #[test]
    fn empty_leaf_gives_neg_infinity_unless_smoothed() {
        let train = single_feature(2, &[0, 0, 0]);
        let mut t = Tree::root_only(train.schema());
        t.full_split(0, 0).unwrap();
        let m = FittedTree::new(t, &train);
        let test = single_feature(2, &[0, 1]);
        assert_eq!(test_log_likelihood(&m, &test, None), LogLikelihood::NegInfinity);
        assert_eq!(LogLikelihood::NegInfinity.to_string(), "-inf");
        let smooth = test_log_likelihood(&m, &test, Some(1.0));
        // (3+1)/(3+2) and (0+1)/(3+2)
        assert_abs_diff_eq!(smooth.value(), (0.8f64).ln() + (0.2f64).ln(), epsilon = 1e-12);
        assert!(smooth > LogLikelihood::NegInfinity);
    }

    #[test]
    fn pointwise_histogram() {
        assert_eq!(pointwise_histogram_log_likelihood(&single_feature(3, &[1, 1, 1])), 0.0);
        assert_abs_diff_eq!(
            pointwise_histogram_log_likelihood(&single_feature(3, &[0, 2])),
            -1.386294,
            epsilon = 1e-6
        );
    }

    #[test]
    fn equivalence_ignores_redundant_splits() {
        let s = Arc::new(Schema::with_cardinalities(&[2, 3]).unwrap());
        let d = Dataset::new(Arc::clone(&s), vec![vec![0, 0], vec![0, 1], vec![1, 2], vec![1, 0]]).unwrap();
        let mut a = Tree::root_only(&s);
        a.full_split(0, 0).unwrap();
        let mut b = a.clone();
        // x1 = 0 has one point in each of two x2 values: splitting changes it
        split_at(&mut b, &[1, 0], 1, &[&[0, 1], &[2]]);
        let fa = FittedTree::new(a.clone(), &d);
        let fb = FittedTree::new(b, &d);
        assert!(!densities_equivalent(&fa, &fb, &s).unwrap());
        let d2 = Dataset::new(Arc::clone(&s), vec![vec![1, 0], vec![1, 1], vec![1, 2]]).unwrap();
        let mut c = a.clone();
        split_at(&mut c, &[1, 0], 1, &[&[0, 1], &[2]]);
        assert!(densities_equivalent(&FittedTree::new(a, &d2), &FittedTree::new(c, &d2), &s).unwrap());
    }
}
