//! Rule-list prior and posterior.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use super::{list_stats, list_volumes, AntecedentUniverse, RuleList, VolumeCache};
use crate::data::ConfigCounts;
use crate::error::{Error, Result};
use crate::schema::Schema;
use crate::special::{ln_gamma, ln_poisson, log_sum_exp, volume_penalty};
use crate::stats::LeafStats;

/// Above this many antecedents the list-length prior is the plain Poisson
/// rather than the truncated one.
pub const TRUNCATION_SWITCH: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ListModelHyper {
    /// Poisson mean over the list length.
    pub lambda: f64,
    /// Poisson mean over antecedent sizes.
    pub eta: f64,
    pub alpha: f64,
    /// Largest antecedent size; `None` means `min(p, 3)`.
    pub max_card: Option<usize>,
    pub min_support: Option<u64>,
    /// Drop `ln G((m+1)a) - (m+1) ln G(a)` from the score.
    #[serde(default)]
    pub omit_prior_normalizer: bool,
}

impl ListModelHyper {
    pub fn new(lambda: f64, eta: f64, alpha: f64) -> Result<Self> {
        let h = ListModelHyper {
            lambda,
            eta,
            alpha,
            ..Default::default()
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda", self.lambda), ("eta", self.eta)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{} must be > 0, got {}", name, v)));
            }
        }
        if !(self.alpha >= 1.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be >= 1, got {}", self.alpha)));
        }
        Ok(())
    }

    pub fn resolved_max_card(&self, num_features: usize) -> usize {
        self.max_card.unwrap_or(num_features.min(3))
    }
}

impl Default for ListModelHyper {
    fn default() -> Self {
        ListModelHyper {
            lambda: 3.0,
            eta: 1.0,
            alpha: 1.0,
            max_card: None,
            min_support: None,
            omit_prior_normalizer: false,
        }
    }
}

/// `ln P(K <= a_size)` for `K ~ Poisson(lambda)`.
fn ln_poisson_cdf(a_size: u64, lambda: f64) -> f64 {
    gamma_ur(a_size as f64 + 1.0, lambda).ln()
}

fn ln_length_prior(m: usize, universe: &AntecedentUniverse, lambda: f64) -> f64 {
    let a_size = universe.size_with_empty();
    if a_size > TRUNCATION_SWITCH {
        ln_poisson(m as u64, lambda)
    } else {
        ln_poisson(m as u64, lambda) - ln_poisson_cdf(a_size, lambda)
    }
}

/// Cardinality term for one draw: Poisson(eta) restricted to sizes that
/// still have unused antecedents.
fn ln_card_prior(c: usize, remaining: &[usize], eta: f64) -> f64 {
    let norm = log_sum_exp(
        remaining
            .iter()
            .enumerate()
            .filter(|&(k, &r)| k >= 1 && r > 0)
            .map(|(k, _)| ln_poisson(k as u64, eta)),
    );
    ln_poisson(c as u64, eta) - norm
}

/// `ln P(m) + sum_j [ln P(c_j | ...) + ln P(a_j | ...)]`.
pub fn log_prior_list(list: &RuleList, universe: &AntecedentUniverse, hyper: &ListModelHyper) -> Result<f64> {
    let mut remaining: Vec<usize> = (0..=universe.max_cardinality())
        .map(|c| universe.count_with_cardinality(c))
        .collect();
    let mut seen = std::collections::HashSet::with_capacity(list.len());
    let mut total = ln_length_prior(list.len(), universe, hyper.lambda);
    for a in &list.rules {
        if universe.index_of(a).is_none() {
            return Err(Error::InvalidArgument(format!(
                "rule {:?} is not in the antecedent universe",
                a.conditions()
            )));
        }
        if !seen.insert(a) {
            return Err(Error::InvalidArgument(format!("rule {:?} appears twice", a.conditions())));
        }
        let c = a.cardinality();
        total += ln_card_prior(c, &remaining, hyper.eta) - (remaining[c] as f64).ln();
        remaining[c] -= 1;
    }
    Ok(total)
}

pub(crate) fn check_list_stats(list: &RuleList, stats: &LeafStats) -> Result<()> {
    if stats.leaves.len() != list.len() + 1 {
        return Err(Error::Inconsistent(format!(
            "list has {} leaves, stats have {}",
            list.len() + 1,
            stats.leaves.len()
        )));
    }
    if stats.total_count() != stats.n {
        return Err(Error::Inconsistent(format!(
            "leaf counts sum to {}, n = {}",
            stats.total_count(),
            stats.n
        )));
    }
    for (l, s) in stats.leaves.iter().enumerate() {
        if s.id != l {
            return Err(Error::Inconsistent(format!("stats entry {} has id {}", l, s.id)));
        }
        if s.volume == 0 && s.count > 0 {
            return Err(Error::Inconsistent(format!(
                "leaf {} has {} points but no volume",
                l, s.count
            )));
        }
    }
    Ok(())
}

fn ln_marginal(stats: &LeafStats, hyper: &ListModelHyper) -> f64 {
    let k = stats.leaves.len() as f64;
    let a = hyper.alpha;
    let normalizer = if hyper.omit_prior_normalizer {
        0.0
    } else {
        ln_gamma(k * a) - k * ln_gamma(a)
    };
    let leaves: f64 = stats.leaves.iter().map(|l| ln_gamma(l.count as f64 + a)).sum();
    normalizer + leaves - ln_gamma(stats.n as f64 + k * a)
        + volume_penalty(stats.leaves.iter().map(|l| (l.count, l.volume)))
}

/// Unnormalized log-posterior of a rule list: the generative prior plus the
/// Dirichlet-multinomial marginal likelihood over its `m + 1` leaves.
pub fn log_posterior_list(
    list: &RuleList,
    stats: &LeafStats,
    hyper: &ListModelHyper,
    universe: &AntecedentUniverse,
) -> Result<f64> {
    check_list_stats(list, stats)?;
    Ok(log_prior_list(list, universe, hyper)? + ln_marginal(stats, hyper))
}

/// Draws a list from the generative prior. Lengths beyond the number of
/// usable antecedents are redrawn.
pub fn sample_prior_list<R: Rng + ?Sized>(
    universe: &AntecedentUniverse,
    hyper: &ListModelHyper,
    rng: &mut R,
) -> RuleList {
    let usable = universe.len();
    let m = loop {
        let m = sample_poisson(hyper.lambda, rng);
        if m <= usable {
            break m;
        }
    };
    let mut used = vec![false; usable];
    let mut remaining: Vec<usize> = (0..=universe.max_cardinality())
        .map(|c| universe.count_with_cardinality(c))
        .collect();
    let mut rules = Vec::with_capacity(m);
    for _ in 0..m {
        let weights: Vec<f64> = remaining
            .iter()
            .enumerate()
            .map(|(c, &r)| if c >= 1 && r > 0 { ln_poisson(c as u64, hyper.eta).exp() } else { 0.0 })
            .collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut c = weights.iter().rposition(|&w| w > 0.0).expect("an antecedent remains");
        for (k, &w) in weights.iter().enumerate() {
            if w > 0.0 && u < w {
                c = k;
                break;
            }
            u -= w;
        }
        let mut pick = rng.random_range(0..remaining[c]);
        let idx = universe
            .with_cardinality(c)
            .iter()
            .copied()
            .find(|&i| {
                if used[i] {
                    return false;
                }
                if pick == 0 {
                    return true;
                }
                pick -= 1;
                false
            })
            .expect("remaining count is consistent");
        used[idx] = true;
        remaining[c] -= 1;
        rules.push(universe.get(idx).clone());
    }
    RuleList::new(rules)
}

/// Inversion sampler; `lambda` is small in practice.
fn sample_poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut k = 0usize;
    let mut p = (-lambda).exp();
    let mut cdf = p;
    while u > cdf && k < 10_000 {
        k += 1;
        p *= lambda / k as f64;
        cdf += p;
        if p == 0.0 && cdf < u {
            break;
        }
    }
    k
}

/// Scores rule lists against fixed data.
#[derive(Debug, Clone)]
pub struct ListObjective<'a> {
    pub hyper: ListModelHyper,
    pub schema: &'a Schema,
    pub universe: &'a AntecedentUniverse,
    pub data: &'a ConfigCounts,
}

impl ListObjective<'_> {
    /// Score with volumes and leaf statistics.
    pub fn evaluate(&self, list: &RuleList, cache: Option<&mut VolumeCache>) -> Result<(f64, LeafStats)> {
        let volumes = list_volumes(list, self.schema, cache)?;
        let stats = list_stats(list, self.data, &volumes);
        let score = log_posterior_list(list, &stats, &self.hyper, self.universe)?;
        Ok((score, stats))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rule_list::Antecedent;
    use crate::stats::LeafStat;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn universe(cards: &[usize], h: usize) -> (Schema, AntecedentUniverse) {
        let s = Schema::with_cardinalities(cards).unwrap();
        let u = AntecedentUniverse::mine(&s, h, None, None).unwrap();
        (s, u)
    }

    #[test]
    fn empty_list_single_feature() {
        // one leaf, alpha = 1: marginal is -n ln V
        let (_, u) = universe(&[10], 1);
        let h = ListModelHyper::new(3.0, 1.0, 1.0).unwrap();
        let list = RuleList::default();
        let stats = LeafStats::new(20, vec![LeafStat::new(0, 20, 10, 20)]);
        let got = log_posterior_list(&list, &stats, &h, &u).unwrap();
        let ln_pm = ln_poisson(0, 3.0) - ln_poisson_cdf(11, 3.0);
        assert_abs_diff_eq!(got, ln_pm - 20.0 * 10f64.ln(), epsilon = 1e-10);
    }

    #[test]
    fn two_leaf_marginal() {
        let (_, u) = universe(&[2], 1);
        let h = ListModelHyper::new(3.0, 1.0, 1.0).unwrap();
        let list = RuleList::new(vec![Antecedent::new(vec![(0, 1)]).unwrap()]);
        let stats = LeafStats::new(10, vec![LeafStat::new(0, 3, 1, 10), LeafStat::new(1, 7, 1, 10)]);
        let got = log_posterior_list(&list, &stats, &h, &u).unwrap();
        let prior = log_prior_list(&list, &u, &h).unwrap();
        let dm = ln_gamma(2.0) - 2.0 * ln_gamma(1.0) + ln_gamma(4.0) + ln_gamma(8.0) - ln_gamma(12.0);
        assert_abs_diff_eq!(got - prior, dm, epsilon = 1e-10);
        // prior: truncated length, single available size, 1 of 2 antecedents
        let expected_prior = ln_poisson(1, 3.0) - ln_poisson_cdf(3, 3.0) + 0.0 - 2f64.ln();
        assert_abs_diff_eq!(prior, expected_prior, epsilon = 1e-12);
    }

    #[test]
    fn normalizer_flag() {
        let (_, u) = universe(&[2], 1);
        let mut h = ListModelHyper::new(3.0, 1.0, 2.0).unwrap();
        let list = RuleList::new(vec![Antecedent::new(vec![(0, 1)]).unwrap()]);
        let stats = LeafStats::new(10, vec![LeafStat::new(0, 3, 1, 10), LeafStat::new(1, 7, 1, 10)]);
        let full = log_posterior_list(&list, &stats, &h, &u).unwrap();
        h.omit_prior_normalizer = true;
        let literal = log_posterior_list(&list, &stats, &h, &u).unwrap();
        assert_abs_diff_eq!(full - literal, ln_gamma(4.0) - 2.0 * ln_gamma(2.0), epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_lists() {
        let (_, u) = universe(&[2, 2], 1);
        let h = ListModelHyper::default();
        let a = Antecedent::new(vec![(0, 1)]).unwrap();
        assert!(log_prior_list(&RuleList::new(vec![a.clone(), a]), &u, &h).is_err());
        let pair = Antecedent::new(vec![(0, 1), (1, 1)]).unwrap();
        assert!(log_prior_list(&RuleList::new(vec![pair]), &u, &h).is_err());
        let list = RuleList::new(vec![Antecedent::new(vec![(0, 1)]).unwrap()]);
        let stats = LeafStats::new(4, vec![LeafStat::new(0, 2, 2, 4), LeafStat::new(1, 2, 0, 4)]);
        assert!(matches!(
            log_posterior_list(&list, &stats, &h, &u),
            Err(Error::Inconsistent(_))
        ));
    }

    #[test]
    fn swap_of_disjoint_rules_keeps_likelihood() {
        let (s, u) = universe(&[3, 2], 2);
        let h = ListModelHyper::default();
        let d = crate::data::Dataset::new(
            std::sync::Arc::new(s.clone()),
            vec![vec![0, 0], vec![1, 1], vec![1, 0], vec![2, 1], vec![0, 1]],
        )
        .unwrap()
        .config_counts();
        let obj = ListObjective {
            hyper: h,
            schema: &s,
            universe: &u,
            data: &d,
        };
        let a = Antecedent::new(vec![(0, 0)]).unwrap();
        let b = Antecedent::new(vec![(0, 1), (1, 1)]).unwrap();
        let l1 = RuleList::new(vec![a.clone(), b.clone()]);
        let l2 = RuleList::new(vec![b, a]);
        let (s1, st1) = obj.evaluate(&l1, None).unwrap();
        let (s2, st2) = obj.evaluate(&l2, None).unwrap();
        let lik1 = s1 - log_prior_list(&l1, &u, &h).unwrap();
        let lik2 = s2 - log_prior_list(&l2, &u, &h).unwrap();
        assert_abs_diff_eq!(lik1, lik2, epsilon = 1e-12);
        assert_eq!(st1.leaves[1].count, st2.leaves[2].count);
    }

    #[test]
    fn prior_samples_score_finite() {
        let (_, u) = universe(&[3, 2, 2], 2);
        let h = ListModelHyper::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let l = sample_prior_list(&u, &h, &mut rng);
            assert!(log_prior_list(&l, &u, &h).unwrap().is_finite());
        }
    }

    #[test]
    fn cardinality_prior_normalizes() {
        let remaining = [0usize, 4, 0, 2];
        let total: f64 = [1usize, 3].iter().map(|&c| ln_card_prior(c, &remaining, 1.3).exp()).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn large_universe_uses_plain_poisson() {
        let (_, u) = universe(&[30, 30, 30], 3);
        assert!(u.size_with_empty() > TRUNCATION_SWITCH);
        assert_eq!(ln_length_prior(2, &u, 3.0), ln_poisson(2, 3.0));
    }
}
