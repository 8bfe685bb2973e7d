//! One-call fitting for each model family and validation-based selection of
//! the Poisson mean.

use serde::{Deserialize, Serialize};

use crate::anneal::{anneal_chains, AnnealConfig};
use crate::data::{split_dataset, Dataset};
use crate::error::{Error, Result};
use crate::evaluation::{test_log_likelihood, FittedList, FittedTree, LogLikelihood};
use crate::exec::{derive_seed, Execution};
use crate::model::{LoadedModel, ModelFile, TreeHyper};
use crate::posterior_branch::{BranchModelHyper, BranchObjective};
use crate::posterior_leaf::{LeafModelHyper, LeafObjective};
use crate::rule_list::{mcmc_search, AntecedentUniverse, ListModelHyper, McmcConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelSpec {
    Leaf(LeafModelHyper),
    Branch(BranchModelHyper),
    List(ListModelHyper),
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Leaf(_) => "leaf",
            ModelSpec::Branch(_) => "branch",
            ModelSpec::List(_) => "list",
        }
    }

    pub fn lambda(&self) -> f64 {
        match self {
            ModelSpec::Leaf(h) => h.lambda,
            ModelSpec::Branch(h) => h.lambda,
            ModelSpec::List(h) => h.lambda,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        match &mut self {
            ModelSpec::Leaf(h) => h.lambda = lambda,
            ModelSpec::Branch(h) => h.lambda = lambda,
            ModelSpec::List(h) => h.lambda = lambda,
        }
        self
    }
}

/// Search effort shared by all model families. `seed` overrides the seeds
/// inside `anneal` and `mcmc`.
#[derive(Debug, Clone)]
pub struct SearchSettings {
    pub anneal: AnnealConfig,
    pub anneal_chains: usize,
    pub mcmc: McmcConfig,
    pub seed: u64,
}

impl Default for SearchSettings {
    fn default() -> Self {
        SearchSettings {
            anneal: AnnealConfig::default(),
            anneal_chains: 4,
            mcmc: McmcConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub file: ModelFile,
    pub model: LoadedModel,
    pub score: f64,
    /// Rule lists only.
    pub rhat: Option<f64>,
    pub converged: Option<bool>,
}

pub fn fit_model(train: &Dataset, spec: &ModelSpec, settings: &SearchSettings, exec: Execution) -> Result<FitOutcome> {
    if train.is_empty() {
        return Err(Error::Data("empty dataset".into()));
    }
    let schema = train.schema();
    let counts = train.config_counts();
    let anneal_cfg = AnnealConfig {
        seed: settings.seed,
        ..settings.anneal.clone()
    };
    let tree_fit = |best: crate::tree::Tree, score: f64, hyper: TreeHyper| {
        let fit = FittedTree::new(best, train);
        let file = ModelFile::from_tree(schema, &fit, score, hyper);
        FitOutcome {
            file,
            model: LoadedModel::Tree(fit),
            score,
            rhat: None,
            converged: None,
        }
    };
    match *spec {
        ModelSpec::Leaf(h) => {
            let h = LeafModelHyper::new(h.lambda, h.alpha)?;
            let obj = LeafObjective::new(h, counts);
            let (i, mut runs) = anneal_chains(schema, &obj, &anneal_cfg, settings.anneal_chains, exec)?;
            let r = runs.swap_remove(i);
            Ok(tree_fit(r.best, r.best_score, TreeHyper::Leaf(h)))
        }
        ModelSpec::Branch(h) => {
            let h = BranchModelHyper::new(h.lambda, h.alpha, h.gamma)?;
            let obj = BranchObjective::new(h, counts);
            let (i, mut runs) = anneal_chains(schema, &obj, &anneal_cfg, settings.anneal_chains, exec)?;
            let r = runs.swap_remove(i);
            Ok(tree_fit(r.best, r.best_score, TreeHyper::Branch(h)))
        }
        ModelSpec::List(h) => {
            h.validate()?;
            let universe = AntecedentUniverse::mine(
                schema,
                h.resolved_max_card(schema.num_features()),
                h.min_support,
                Some(train),
            )?;
            let cfg = McmcConfig {
                seed: settings.seed,
                ..settings.mcmc.clone()
            };
            let fit = mcmc_search(schema, &counts, &universe, &h, &cfg, exec)?;
            let fitted = FittedList {
                list: fit.list,
                stats: fit.stats,
            };
            let file = ModelFile::from_list(schema, &fitted, fit.score, h, fit.rhat, fit.converged);
            Ok(FitOutcome {
                file,
                model: LoadedModel::List(fitted),
                score: fit.score,
                rhat: Some(fit.rhat),
                converged: Some(fit.converged),
            })
        }
    }
}

/// Validation log-likelihood for each candidate mean, in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub lambda: f64,
    pub candidates: Vec<(f64, LogLikelihood)>,
}

/// Picks the Poisson mean with the highest unsmoothed log-likelihood on a
/// held-out 20% of `train`; ties go to the smaller value. A single
/// candidate is returned without fitting.
pub fn select_lambda(
    train: &Dataset,
    spec: &ModelSpec,
    lambdas: &[f64],
    settings: &SearchSettings,
    exec: Execution,
) -> Result<Selection> {
    let mut sorted: Vec<f64> = lambdas.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    sorted.dedup();
    match sorted.len() {
        0 => return Err(Error::InvalidArgument("no candidate lambda values".into())),
        1 => {
            return Ok(Selection {
                lambda: sorted[0],
                candidates: Vec::new(),
            })
        }
        _ => {}
    }
    let (inner, validation) = split_dataset(train, 0.8, derive_seed(settings.seed, "select", 0))?;
    let mut candidates = Vec::with_capacity(sorted.len());
    let mut best: Option<(f64, LogLikelihood)> = None;
    for &lambda in &sorted {
        let fit = fit_model(&inner, &spec.with_lambda(lambda), settings, exec)?;
        let ll = test_log_likelihood(fit.model.as_density(), &validation, None);
        candidates.push((lambda, ll));
        if best.is_none_or(|(_, b)| ll > b) {
            best = Some((lambda, ll));
        }
    }
    Ok(Selection {
        lambda: best.expect("at least two candidates").0,
        candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{gen_extreme_uniform, gen_sparse_tree_dataset, sparse_tree_ground_truth};
    use crate::evaluation::densities_equivalent;

    fn quick() -> SearchSettings {
        SearchSettings {
            anneal: AnnealConfig {
                iterations: 3_000,
                restart_period: 1_000,
                ..Default::default()
            },
            anneal_chains: 2,
            mcmc: McmcConfig {
                chains: 2,
                iterations: 3_000,
                ..Default::default()
            },
            seed: 1,
        }
    }

    #[test]
    fn leaf_model_recovers_sparse_tree() {
        let d = gen_sparse_tree_dataset();
        let out = fit_model(&d, &ModelSpec::Leaf(LeafModelHyper::default()), &quick(), Execution::Parallel).unwrap();
        let truth = FittedTree::new(sparse_tree_ground_truth(), &d);
        assert!(densities_equivalent(out.model.as_density(), &truth, d.schema()).unwrap());
        let back = ModelFile::from_json_str(&out.file.to_json_string()).unwrap();
        assert_eq!(back, out.file);
    }

    #[test]
    fn extreme_uniform_stays_root() {
        let d = gen_extreme_uniform();
        for spec in [
            ModelSpec::Leaf(LeafModelHyper::default()),
            ModelSpec::Branch(BranchModelHyper::default()),
        ] {
            let out = fit_model(&d, &spec, &quick(), Execution::Sequential).unwrap();
            assert_eq!(out.model.num_leaves(), 1, "{}", spec.name());
        }
    }

    #[test]
    fn selection_prefers_smaller_on_ties() {
        let d = gen_extreme_uniform();
        let s = select_lambda(&d, &ModelSpec::Leaf(LeafModelHyper::default()), &[8.0, 5.0], &quick(), Execution::Sequential)
            .unwrap();
        assert_eq!(s.candidates.len(), 2);
        if s.candidates[0].1 == s.candidates[1].1 {
            assert_eq!(s.lambda, 5.0);
        }
        assert!(select_lambda(&d, &ModelSpec::Leaf(LeafModelHyper::default()), &[], &quick(), Execution::Sequential).is_err());
    }
}
