//! Simulated-annealing MAP search over trees.
//!
//! Each iteration draws `u ~ U(0, 1)` and applies one of five moves:
//!
//! | range of `u`                     | move                                          |
//! |----------------------------------|-----------------------------------------------|
//! | `[0, (1-e)/4)`                   | collapse a parent whose children are all leaves |
//! | `[(1-e)/4, (1-e)/2)`             | split a random leaf on a random feature       |
//! | `[(1-e)/2, 3(1-e)/4)`            | reset a random node to a random binary split  |
//! | `[3(1-e)/4, 1-e)`                | merge two sibling nodes                       |
//! | `[1-e, 1)`                       | remove all children of a random internal node |
//!
//! A move that is impossible in the current tree leaves it unchanged.
//! Acceptance is Metropolis with geometric cooling; every `restart_period`
//! iterations the chain jumps to the best tree so far or to the root-only
//! tree (probability 1/2 each) and the temperature resets.

use std::io::Write;

use fixedbitset::FixedBitSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{derive_seed, map_indexed, Execution};
use crate::schema::Schema;
use crate::tree::{value_set, NodeId, Tree, ValueSet};

/// Anything that scores trees; larger is better.
pub trait TreeObjective: Sync {
    fn score(&self, tree: &Tree) -> f64;
}

impl<F: Fn(&Tree) -> f64 + Sync> TreeObjective for F {
    fn score(&self, tree: &Tree) -> f64 {
        self(tree)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MoveKind {
    CollapseLeafParent,
    SplitLeaf,
    BinarySplit,
    MergeSiblings,
    RemoveChildren,
}

impl MoveKind {
    pub fn for_draw(u: f64, epsilon: f64) -> MoveKind {
        let s = 1.0 - epsilon;
        if u < s / 4.0 {
            MoveKind::CollapseLeafParent
        } else if u < s / 2.0 {
            MoveKind::SplitLeaf
        } else if u < 3.0 * s / 4.0 {
            MoveKind::BinarySplit
        } else if u < s {
            MoveKind::MergeSiblings
        } else {
            MoveKind::RemoveChildren
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnealConfig {
    /// Probability of the remove-all-children move.
    pub epsilon: f64,
    pub iterations: usize,
    pub initial_temperature: f64,
    pub cooling_rate: f64,
    pub restart_period: usize,
    pub seed: u64,
    pub warm_start: Option<Tree>,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        AnnealConfig {
            epsilon: 0.05,
            iterations: 10_000,
            initial_temperature: 2.0,
            cooling_rate: 0.997,
            restart_period: 2_500,
            seed: 0,
            warm_start: None,
        }
    }
}

impl AnnealConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad("epsilon must be in (0, 1)");
        }
        if self.iterations == 0 {
            return bad("iterations must be positive");
        }
        if !(self.initial_temperature > 0.0 && self.initial_temperature.is_finite()) {
            return bad("initial temperature must be positive");
        }
        if !(self.cooling_rate > 0.0 && self.cooling_rate < 1.0) {
            return bad("cooling rate must be in (0, 1)");
        }
        if self.restart_period == 0 {
            return bad("restart period must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub current: f64,
    pub best: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnealResult {
    pub best: Tree,
    pub best_score: f64,
    pub trace: Vec<TracePoint>,
}

/// Applies a uniformly drawn move. Returns the input unchanged when the
/// drawn move is impossible.
pub fn propose_neighbor<R: Rng + ?Sized>(tree: &Tree, rng: &mut R, epsilon: f64) -> Tree {
    let kind = MoveKind::for_draw(rng.random::<f64>(), epsilon);
    apply_move(tree, kind, rng).unwrap_or_else(|| tree.clone())
}

/// Applies one move of the given kind, or `None` when it must be skipped.
pub fn apply_move<R: Rng + ?Sized>(tree: &Tree, kind: MoveKind, rng: &mut R) -> Option<Tree> {
    match kind {
        MoveKind::CollapseLeafParent => {
            let parents: Vec<NodeId> = tree
                .internal_nodes()
                .into_iter()
                .filter(|&i| tree.node(i).children().all(|c| tree.node(c).is_leaf()))
                .collect();
            let &pick = pick(rng, &parents)?;
            let mut t = tree.clone();
            t.collapse(pick);
            Some(t)
        }
        MoveKind::SplitLeaf => {
            let leaves = tree.leaves();
            let &leaf = pick(rng, &leaves)?;
            let feature = rng.random_range(0..tree.num_features());
            let mut t = tree.clone();
            match t.full_split(leaf, feature) {
                Ok(true) => Some(t),
                _ => None,
            }
        }
        MoveKind::BinarySplit => {
            let node = rng.random_range(0..tree.len());
            let sigma = tree.node(node).sigma();
            let features: Vec<usize> = (0..sigma.len())
                .filter(|&j| sigma[j].count_ones(..) >= 2)
                .collect();
            let &feature = pick(rng, &features)?;
            let parts = random_bipartition(&sigma[feature], tree.is_ordinal(feature), rng);
            let mut t = tree.clone();
            t.collapse(node);
            t.split_leaf(node, feature, parts.to_vec()).ok()?;
            Some(t)
        }
        MoveKind::MergeSiblings => {
            let mut pairs = Vec::new();
            for parent in tree.internal_nodes() {
                let split = tree.node(parent).split().unwrap();
                let ordinal = tree.is_ordinal(split.feature);
                let b = split.branches.len();
                for i in 0..b {
                    for j in i + 1..b {
                        if !ordinal || adjacent(&split.branches[i].values, &split.branches[j].values) {
                            pairs.push((parent, i, j));
                        }
                    }
                }
            }
            let &(parent, i, j) = pick(rng, &pairs)?;
            let mut t = tree.clone();
            t.merge_branches(parent, i, j).ok()?;
            Some(t)
        }
        MoveKind::RemoveChildren => {
            let internal = tree.internal_nodes();
            let &node = pick(rng, &internal)?;
            let mut t = tree.clone();
            t.collapse(node);
            Some(t)
        }
    }
}

fn pick<'a, T, R: Rng + ?Sized>(rng: &mut R, items: &'a [T]) -> Option<&'a T> {
    if items.is_empty() {
        None
    } else {
        Some(&items[rng.random_range(0..items.len())])
    }
}

fn adjacent(a: &ValueSet, b: &ValueSet) -> bool {
    let (a_lo, a_hi) = (a.minimum().unwrap(), a.maximum().unwrap());
    let (b_lo, b_hi) = (b.minimum().unwrap(), b.maximum().unwrap());
    a_hi + 1 == b_lo || b_hi + 1 == a_lo
}

/// Uniform two-block partition of `allowed` (at least two values). Ordinal
/// features are cut at a uniform position between consecutive values.
fn random_bipartition<R: Rng + ?Sized>(allowed: &ValueSet, ordinal: bool, rng: &mut R) -> [ValueSet; 2] {
    let values: Vec<usize> = allowed.ones().collect();
    let q = allowed.len();
    if ordinal {
        let cut = rng.random_range(1..values.len());
        return [
            value_set(q, values[..cut].iter().copied()),
            value_set(q, values[cut..].iter().copied()),
        ];
    }
    loop {
        let mut left = FixedBitSet::with_capacity(q);
        let mut right = FixedBitSet::with_capacity(q);
        for &v in &values {
            if rng.random::<bool>() {
                left.insert(v);
            } else {
                right.insert(v);
            }
        }
        if !left.is_clear() && !right.is_clear() {
            return [left, right];
        }
    }
}

/// One annealing chain. Reports the best tree seen (not the final state).
pub fn anneal<O: TreeObjective + ?Sized>(
    schema: &Schema,
    objective: &O,
    config: &AnnealConfig,
) -> Result<AnnealResult> {
    config.validate()?;
    let root = Tree::root_only(schema);
    let start = match &config.warm_start {
        Some(t) => {
            if t.cardinalities() != schema.cardinalities() {
                return Err(Error::InvalidArgument(
                    "warm-start tree does not match the schema".into(),
                ));
            }
            t.clone()
        }
        None => root.clone(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut current = start;
    let mut current_score = objective.score(&current);
    let mut best = current.clone();
    let mut best_score = current_score;
    let mut temperature = config.initial_temperature;
    let mut trace = Vec::with_capacity(config.iterations);

    for iteration in 0..config.iterations {
        if iteration > 0 && iteration % config.restart_period == 0 {
            current = if rng.random::<bool>() { best.clone() } else { root.clone() };
            current_score = objective.score(&current);
            temperature = config.initial_temperature;
        }
        let kind = MoveKind::for_draw(rng.random::<f64>(), config.epsilon);
        if let Some(candidate) = apply_move(&current, kind, &mut rng) {
            let score = objective.score(&candidate);
            let delta = score - current_score;
            if delta >= 0.0 || rng.random::<f64>() < (delta / temperature).exp() {
                current = candidate;
                current_score = score;
                if current_score > best_score {
                    best = current.clone();
                    best_score = current_score;
                }
            }
        }
        temperature *= config.cooling_rate;
        trace.push(TracePoint {
            iteration,
            current: current_score,
            best: best_score,
        });
    }
    Ok(AnnealResult {
        best,
        best_score,
        trace,
    })
}

/// Independent chains with seeds derived from `config.seed`; the best chain
/// (lowest index on ties) is reported first in `.0`, all chains in `.1`.
pub fn anneal_chains<O: TreeObjective + ?Sized>(
    schema: &Schema,
    objective: &O,
    config: &AnnealConfig,
    chains: usize,
    exec: Execution,
) -> Result<(usize, Vec<AnnealResult>)> {
    if chains == 0 {
        return Err(Error::InvalidArgument("at least one chain is required".into()));
    }
    config.validate()?;
    let results = map_indexed(exec, chains, |c| {
        let cfg = AnnealConfig {
            seed: derive_seed(config.seed, "anneal", c as u64),
            ..config.clone()
        };
        anneal(schema, objective, &cfg)
    });
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, r) in results.iter().enumerate() {
        if r.best_score > results[best].best_score {
            best = i;
        }
    }
    Ok((best, results))
}

pub fn write_trace_csv<W: Write>(trace: &[TracePoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["iteration", "current", "best"])
        .map_err(|e| Error::Data(e.to_string()))?;
    for t in trace {
        w.serialize((t.iteration, t.current, t.best))
            .map_err(|e| Error::Data(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::FeatureSpec;

    fn ordinal_schema(q: usize) -> Schema {
        Schema::new(vec![FeatureSpec::new(
            "x",
            (1..=q).map(|v| v.to_string()).collect(),
            true,
        )])
        .unwrap()
    }

    #[test]
    fn move_ranges() {
        let e = 0.2;
        assert_eq!(MoveKind::for_draw(0.0, e), MoveKind::CollapseLeafParent);
        assert_eq!(MoveKind::for_draw(0.2, e), MoveKind::SplitLeaf);
        assert_eq!(MoveKind::for_draw(0.4, e), MoveKind::BinarySplit);
        assert_eq!(MoveKind::for_draw(0.6, e), MoveKind::BinarySplit);
        assert_eq!(MoveKind::for_draw(0.61, e), MoveKind::MergeSiblings);
        assert_eq!(MoveKind::for_draw(0.8, e), MoveKind::RemoveChildren);
    }

    #[test]
    fn root_only_collapse_is_skipped() {
        let s = Schema::with_cardinalities(&[3, 2]).unwrap();
        let t = Tree::root_only(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for kind in [MoveKind::CollapseLeafParent, MoveKind::MergeSiblings, MoveKind::RemoveChildren] {
            assert!(apply_move(&t, kind, &mut rng).is_none());
        }
    }

    #[test]
    fn split_leaf_is_a_full_split() {
        let s = Schema::with_cardinalities(&[4]).unwrap();
        let t = Tree::root_only(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = apply_move(&t, MoveKind::SplitLeaf, &mut rng).unwrap();
        n.check_invariants().unwrap();
        let split = n.node(Tree::ROOT).split().unwrap();
        assert_eq!(split.branches.len(), 4);
        assert!(split.branches.iter().all(|b| b.values.count_ones(..) == 1));
    }

    #[test]
    fn ordinal_binary_split_is_contiguous() {
        let s = ordinal_schema(4);
        let t = Tree::root_only(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let n = apply_move(&t, MoveKind::BinarySplit, &mut rng).unwrap();
            let split = n.node(Tree::ROOT).split().unwrap();
            assert_eq!(split.branches.len(), 2);
            for b in &split.branches {
                assert!(crate::tree::is_contiguous(&b.values));
            }
        }
    }

    #[test]
    fn constant_objective_keeps_initial_tree() {
        let s = Schema::with_cardinalities(&[3, 3]).unwrap();
        let cfg = AnnealConfig {
            iterations: 2000,
            seed: 5,
            ..Default::default()
        };
        let r = anneal(&s, &|_: &Tree| 0.0, &cfg).unwrap();
        assert!(r.best.is_root_only());
        let mut warm = Tree::root_only(&s);
        warm.full_split(0, 1).unwrap();
        let cfg = AnnealConfig {
            warm_start: Some(warm.clone()),
            ..cfg
        };
        assert_eq!(anneal(&s, &|_: &Tree| 1.0, &cfg).unwrap().best, warm);
    }

    #[test]
    fn best_is_monotone_and_seeded() {
        let s = Schema::with_cardinalities(&[3, 2]).unwrap();
        // reward leaves, penalize depth
        let obj = |t: &Tree| t.num_leaves() as f64 - 0.7 * t.max_depth() as f64;
        let cfg = AnnealConfig {
            iterations: 3000,
            restart_period: 1000,
            seed: 17,
            ..Default::default()
        };
        let a = anneal(&s, &obj, &cfg).unwrap();
        let b = anneal(&s, &obj, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.trace.windows(2).all(|w| w[0].best <= w[1].best));
        assert_eq!(a.trace.last().unwrap().best, a.best_score);
    }

    #[test]
    fn chains_agree_across_policies() {
        let s = Schema::with_cardinalities(&[3, 3]).unwrap();
        let obj = |t: &Tree| -((t.num_leaves() as f64) - 4.0).powi(2);
        let cfg = AnnealConfig {
            iterations: 500,
            seed: 2,
            ..Default::default()
        };
        let seq = anneal_chains(&s, &obj, &cfg, 4, Execution::Sequential).unwrap();
        let par = anneal_chains(&s, &obj, &cfg, 4, Execution::Parallel).unwrap();
        assert_eq!(seq, par);
        assert_eq!(seq.1[seq.0].best_score, 0.0);
    }

    #[test]
    fn rejects_bad_config() {
        let s = Schema::with_cardinalities(&[2]).unwrap();
        let obj = |_: &Tree| 0.0;
        for cfg in [
            AnnealConfig { epsilon: 0.0, ..Default::default() },
            AnnealConfig { iterations: 0, ..Default::default() },
            AnnealConfig { cooling_rate: 1.0, ..Default::default() },
            AnnealConfig { restart_period: 0, ..Default::default() },
        ] {
            assert!(anneal(&s, &obj, &cfg).is_err());
        }
        let other = Schema::with_cardinalities(&[3]).unwrap();
        let cfg = AnnealConfig { warm_start: Some(Tree::root_only(&other)), ..Default::default() };
        assert!(anneal(&s, &obj, &cfg).is_err());
    }

    #[test]
    fn trace_csv() {
        let mut buf = Vec::new();
        write_trace_csv(&[TracePoint { iteration: 0, current: -1.5, best: -1.0 }], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "iteration,current,best\n0,-1.5,-1.0\n");
    }
}
