//! Metropolis-Hastings over rule lists with add, remove and swap moves.

use fixedbitset::FixedBitSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::posterior::ListObjective;
use super::{gelman_rubin, sample_prior_list, AntecedentUniverse, ListModelHyper, RuleList, VolumeCache};
use crate::data::ConfigCounts;
use crate::error::{Error, Result};
use crate::exec::{derive_seed, for_each_mut, Execution};
use crate::schema::Schema;
use crate::stats::LeafStats;

const P_ADD: f64 = 0.4;
const P_REMOVE: f64 = 0.4;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McmcConfig {
    pub chains: usize,
    /// Iteration budget per chain.
    pub iterations: usize,
    pub seed: u64,
    /// Chains advance in blocks of this many iterations between
    /// convergence checks.
    pub check_every: usize,
    /// No convergence check before this many iterations.
    pub min_iterations: usize,
    pub rhat_threshold: f64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            chains: 4,
            iterations: 20_000,
            seed: 0,
            check_every: 1_000,
            min_iterations: 4_000,
            rhat_threshold: 1.05,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains < 2 {
            return Err(Error::InvalidArgument(format!(
                "convergence diagnostics need at least 2 chains, got {}",
                self.chains
            )));
        }
        if self.iterations < 10 || self.check_every == 0 {
            return Err(Error::InvalidArgument(
                "iterations must be >= 10 and check_every > 0".into(),
            ));
        }
        if !(self.rhat_threshold > 1.0) {
            return Err(Error::InvalidArgument("rhat_threshold must exceed 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ListFit {
    pub list: RuleList,
    pub score: f64,
    pub stats: LeafStats,
    /// Per-chain log-posterior after every iteration.
    pub traces: Vec<Vec<f64>>,
    pub rhat: f64,
    pub converged: bool,
    pub iterations: usize,
}

struct Chain {
    rng: ChaCha8Rng,
    rules: Vec<usize>,
    used: FixedBitSet,
    score: f64,
    best: (f64, Vec<usize>),
    trace: Vec<f64>,
    cache: VolumeCache,
    error: Option<Error>,
}

fn to_list(universe: &AntecedentUniverse, rules: &[usize]) -> RuleList {
    RuleList::new(rules.iter().map(|&i| universe.get(i).clone()).collect())
}

impl Chain {
    fn score_of(&mut self, obj: &ListObjective<'_>, rules: &[usize]) -> Result<f64> {
        obj.evaluate(&to_list(obj.universe, rules), Some(&mut self.cache))
            .map(|(s, _)| s)
    }

    fn random_unused(&mut self, n: usize) -> usize {
        let m = self.rules.len();
        if m * 2 < n {
            loop {
                let i = self.rng.random_range(0..n);
                if !self.used.contains(i) {
                    return i;
                }
            }
        }
        let k = self.rng.random_range(0..n - m);
        self.used.zeroes().nth(k).expect("unused antecedent exists")
    }

    fn step(&mut self, obj: &ListObjective<'_>) {
        let n = obj.universe.len();
        let m = self.rules.len();
        let u: f64 = self.rng.random();
        let mut proposal = self.rules.clone();
        let ln_ratio = if u < P_ADD {
            if m == n {
                None
            } else {
                let a = self.random_unused(n);
                let pos = self.rng.random_range(0..=m);
                proposal.insert(pos, a);
                Some(((n - m) as f64).ln())
            }
        } else if u < P_ADD + P_REMOVE {
            if m == 0 {
                None
            } else {
                let pos = self.rng.random_range(0..m);
                proposal.remove(pos);
                Some(-((n - m + 1) as f64).ln())
            }
        } else if m < 2 {
            None
        } else {
            let i = self.rng.random_range(0..m);
            let mut j = self.rng.random_range(0..m - 1);
            if j >= i {
                j += 1;
            }
            proposal.swap(i, j);
            Some(0.0)
        };
        if let Some(ln_ratio) = ln_ratio {
            match self.score_of(obj, &proposal) {
                Ok(new) => {
                    let log_accept = new - self.score + ln_ratio;
                    if log_accept >= 0.0 || self.rng.random::<f64>().ln() < log_accept {
                        for &i in &self.rules {
                            self.used.set(i, false);
                        }
                        for &i in &proposal {
                            self.used.insert(i);
                        }
                        self.rules = proposal;
                        self.score = new;
                        if new > self.best.0 {
                            self.best = (new, self.rules.clone());
                        }
                    }
                }
                Err(e) => {
                    self.error.get_or_insert(e);
                }
            }
        }
        self.trace.push(self.score);
    }
}

/// Runs `config.chains` chains from independent prior draws and returns the
/// best list seen by any of them. Rules left with zero volume are removed
/// from the reported list and its score recomputed.
pub fn mcmc_search(
    schema: &Schema,
    data: &ConfigCounts,
    universe: &AntecedentUniverse,
    hyper: &ListModelHyper,
    config: &McmcConfig,
    exec: Execution,
) -> Result<ListFit> {
    config.validate()?;
    hyper.validate()?;
    if universe.is_empty() {
        return Err(Error::InvalidArgument("antecedent universe is empty".into()));
    }
    let obj = ListObjective {
        hyper: *hyper,
        schema,
        universe,
        data,
    };
    let mut chains = Vec::with_capacity(config.chains);
    for c in 0..config.chains {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "mcmc", c as u64));
        let start = sample_prior_list(universe, hyper, &mut rng);
        let rules: Vec<usize> = start
            .rules
            .iter()
            .map(|a| universe.index_of(a).expect("sampled from universe"))
            .collect();
        let mut used = FixedBitSet::with_capacity(universe.len());
        for &i in &rules {
            used.insert(i);
        }
        let mut chain = Chain {
            rng,
            rules: Vec::new(),
            used,
            score: 0.0,
            best: (f64::NEG_INFINITY, Vec::new()),
            trace: Vec::with_capacity(config.iterations),
            cache: VolumeCache::new(),
            error: None,
        };
        chain.score = chain.score_of(&obj, &rules)?;
        chain.best = (chain.score, rules.clone());
        chain.rules = rules;
        chains.push(chain);
    }

    let mut done = 0;
    let mut rhat = f64::INFINITY;
    let mut converged = false;
    while done < config.iterations {
        let block = config.check_every.min(config.iterations - done);
        for_each_mut(exec, &mut chains, |_, c| {
            for _ in 0..block {
                c.step(&obj);
            }
        });
        done += block;
        if let Some(e) = chains.iter_mut().find_map(|c| c.error.take()) {
            return Err(e);
        }
        if done >= 10 {
            let traces: Vec<Vec<f64>> = chains.iter().map(|c| c.trace.clone()).collect();
            rhat = gelman_rubin(&traces)?;
            if done >= config.min_iterations && rhat < config.rhat_threshold {
                converged = true;
                break;
            }
        }
    }

    let winner = chains
        .iter()
        .enumerate()
        .fold(0, |w, (i, c)| if c.best.0 > chains[w].best.0 { i } else { w });
    let best = to_list(universe, &chains[winner].best.1);
    let (_, stats) = obj.evaluate(&best, None)?;
    let pruned = RuleList::new(
        best.rules
            .into_iter()
            .zip(stats.leaves.iter().skip(1))
            .filter(|(_, s)| s.volume > 0)
            .map(|(a, _)| a)
            .collect(),
    );
    let (score, stats) = obj.evaluate(&pruned, None)?;
    Ok(ListFit {
        list: pruned,
        score,
        stats,
        traces: chains.into_iter().map(|c| c.trace).collect(),
        rhat,
        converged,
        iterations: done,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use std::sync::Arc;

    fn uniform_single_feature() -> (Schema, ConfigCounts) {
        let s = Schema::with_cardinalities(&[10]).unwrap();
        let rows = (0..500).map(|i| vec![(i % 10) as u32]).collect();
        let d = Dataset::new(Arc::new(s.clone()), rows).unwrap();
        (s, d.config_counts())
    }

    #[test]
    fn uniform_data_gives_empty_list() {
        let (s, d) = uniform_single_feature();
        let u = AntecedentUniverse::mine(&s, 1, None, None).unwrap();
        let h = ListModelHyper::new(1.0, 1.0, 1.0).unwrap();
        let cfg = McmcConfig {
            chains: 2,
            iterations: 2_000,
            seed: 5,
            ..Default::default()
        };
        let fit = mcmc_search(&s, &d, &u, &h, &cfg, Execution::Sequential).unwrap();
        assert!(fit.list.is_empty());
        assert_eq!(fit.traces.len(), 2);
        assert_eq!(fit.traces[0].len(), fit.iterations);
    }

    #[test]
    fn single_chain_rejected() {
        let (s, d) = uniform_single_feature();
        let u = AntecedentUniverse::mine(&s, 1, None, None).unwrap();
        let cfg = McmcConfig {
            chains: 1,
            ..Default::default()
        };
        assert!(mcmc_search(&s, &d, &u, &ListModelHyper::default(), &cfg, Execution::Sequential).is_err());
    }

    #[test]
    fn deterministic_across_policies() {
        let s = Schema::with_cardinalities(&[2, 3, 2]).unwrap();
        let rows = (0..60u32).map(|i| vec![i % 2, (i / 2) % 3 * (i % 2), (i / 7) % 2]).collect();
        let d = Dataset::new(Arc::new(s.clone()), rows).unwrap().config_counts();
        let u = AntecedentUniverse::mine(&s, 2, None, None).unwrap();
        let cfg = McmcConfig {
            chains: 3,
            iterations: 1_500,
            seed: 11,
            ..Default::default()
        };
        let h = ListModelHyper::default();
        let a = mcmc_search(&s, &d, &u, &h, &cfg, Execution::Sequential).unwrap();
        let b = mcmc_search(&s, &d, &u, &h, &cfg, Execution::Parallel).unwrap();
        assert_eq!(a.list, b.list);
        assert_eq!(a.traces, b.traces);
        assert!(a.stats.leaves.iter().all(|l| l.volume > 0));
    }
}
