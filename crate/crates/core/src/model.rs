//! Serialized fitted models and their DOT / text renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{DensityModel, FittedList, FittedTree};
use crate::posterior_branch::BranchModelHyper;
use crate::posterior_leaf::LeafModelHyper;
use crate::rule_list::{Antecedent, ListModelHyper, RuleList};
use crate::schema::Schema;
use crate::stats::{LeafStat, LeafStats};
use crate::tree::{value_set, NodeId, Tree};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafJson {
    pub n: u64,
    pub volume: u64,
    pub density: f64,
}

impl From<&LeafStat> for LeafJson {
    fn from(s: &LeafStat) -> Self {
        LeafJson {
            n: s.count,
            volume: s.volume,
            density: s.density,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeJson {
    Leaf(LeafJson),
    Split { feature: String, branches: Vec<BranchJson> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchJson {
    pub values: Vec<String>,
    pub child: NodeJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleJson {
    pub conditions: BTreeMap<String, String>,
    pub leaf: LeafJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelBody {
    Leaf {
        hyper: LeafModelHyper,
        root: NodeJson,
    },
    Branch {
        hyper: BranchModelHyper,
        root: NodeJson,
    },
    List {
        hyper: ListModelHyper,
        rules: Vec<RuleJson>,
        default_leaf: LeafJson,
        /// `None` when the statistic is infinite.
        rhat: Option<f64>,
        converged: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub schema: Schema,
    pub n: u64,
    pub log_posterior: f64,
    #[serde(flatten)]
    pub body: ModelBody,
}

/// A model file decoded back into a usable density.
#[derive(Debug, Clone)]
pub enum LoadedModel {
    Tree(FittedTree),
    List(FittedList),
}

impl LoadedModel {
    pub fn as_density(&self) -> &dyn DensityModel {
        match self {
            LoadedModel::Tree(t) => t,
            LoadedModel::List(l) => l,
        }
    }

    pub fn num_leaves(&self) -> usize {
        match self {
            LoadedModel::Tree(t) => t.stats.leaves.len(),
            LoadedModel::List(l) => l.stats.leaves.len(),
        }
    }
}

fn tree_json(schema: &Schema, tree: &Tree, stats: &LeafStats, id: NodeId) -> NodeJson {
    let node = tree.node(id);
    match node.split() {
        None => NodeJson::Leaf(stats.by_id(id).expect("stats cover every leaf").into()),
        Some(split) => {
            let f = schema.feature(split.feature);
            NodeJson::Split {
                feature: f.name.clone(),
                branches: split
                    .branches
                    .iter()
                    .map(|b| BranchJson {
                        values: b.values.ones().map(|v| f.categories[v].clone()).collect(),
                        child: tree_json(schema, tree, stats, b.child),
                    })
                    .collect(),
            }
        }
    }
}

impl ModelFile {
    pub fn from_tree(schema: &Schema, fit: &FittedTree, score: f64, hyper: TreeHyper) -> Self {
        let root = tree_json(schema, &fit.tree, &fit.stats, Tree::ROOT);
        let body = match hyper {
            TreeHyper::Leaf(hyper) => ModelBody::Leaf { hyper, root },
            TreeHyper::Branch(hyper) => ModelBody::Branch { hyper, root },
        };
        ModelFile {
            format_version: FORMAT_VERSION,
            schema: schema.clone(),
            n: fit.stats.n,
            log_posterior: score,
            body,
        }
    }

    pub fn from_list(
        schema: &Schema,
        fit: &FittedList,
        score: f64,
        hyper: ListModelHyper,
        rhat: f64,
        converged: bool,
    ) -> Self {
        let rules = fit
            .list
            .rules
            .iter()
            .zip(fit.stats.leaves.iter().skip(1))
            .map(|(a, s)| RuleJson {
                conditions: a
                    .conditions()
                    .iter()
                    .map(|&(f, v)| {
                        let spec = schema.feature(f);
                        (spec.name.clone(), spec.categories[v as usize].clone())
                    })
                    .collect(),
                leaf: s.into(),
            })
            .collect();
        ModelFile {
            format_version: FORMAT_VERSION,
            schema: schema.clone(),
            n: fit.stats.n,
            log_posterior: score,
            body: ModelBody::List {
                hyper,
                rules,
                default_leaf: (&fit.stats.leaves[0]).into(),
                rhat: rhat.is_finite().then_some(rhat),
                converged,
            },
        }
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let m: ModelFile = serde_json::from_str(s).map_err(|e| Error::Data(format!("model file: {}", e)))?;
        if m.format_version != FORMAT_VERSION {
            return Err(Error::Data(format!("unsupported model format version {}", m.format_version)));
        }
        Ok(m)
    }

    pub fn model_name(&self) -> &'static str {
        match self.body {
            ModelBody::Leaf { .. } => "leaf",
            ModelBody::Branch { .. } => "branch",
            ModelBody::List { .. } => "list",
        }
    }

    /// Rebuilds the structure and its training statistics.
    pub fn load(&self) -> Result<LoadedModel> {
        match &self.body {
            ModelBody::Leaf { root, .. } | ModelBody::Branch { root, .. } => {
                let mut tree = Tree::root_only(&self.schema);
                let mut leaves = Vec::new();
                let start = vec![0u32; self.schema.num_features()];
                rebuild(&self.schema, &mut tree, root, start, &mut leaves)?;
                let mut stats: Vec<LeafStat> = leaves
                    .iter()
                    .map(|(p, l)| LeafStat::new(tree.assign_leaf(p), l.n, l.volume, self.n))
                    .collect();
                stats.sort_by_key(|s| s.id);
                let stats = LeafStats::new(self.n, stats);
                crate::posterior_leaf::check_stats(&tree, &stats)?;
                Ok(LoadedModel::Tree(FittedTree { tree, stats }))
            }
            ModelBody::List {
                rules, default_leaf, ..
            } => {
                let mut list = Vec::with_capacity(rules.len());
                let mut stats = vec![LeafStat::new(0, default_leaf.n, default_leaf.volume, self.n)];
                for (j, r) in rules.iter().enumerate() {
                    let conditions = r
                        .conditions
                        .iter()
                        .map(|(name, label)| self.lookup(name, label))
                        .collect::<Result<Vec<_>>>()?;
                    list.push(Antecedent::new(conditions)?);
                    stats.push(LeafStat::new(j + 1, r.leaf.n, r.leaf.volume, self.n));
                }
                let list = RuleList::new(list);
                let stats = LeafStats::new(self.n, stats);
                let volumes = crate::rule_list::list_volumes(&list, &self.schema, None)?;
                if volumes.iter().zip(&stats.leaves).any(|(v, s)| *v != s.volume) || stats.total_count() != self.n {
                    return Err(Error::Data("model file leaf statistics do not match its rules".into()));
                }
                Ok(LoadedModel::List(FittedList { list, stats }))
            }
        }
    }

    fn lookup(&self, name: &str, label: &str) -> Result<(usize, u32)> {
        let f = self
            .schema
            .feature_index(name)
            .ok_or_else(|| Error::Data(format!("model refers to unknown feature {:?}", name)))?;
        let v = self
            .schema
            .feature(f)
            .category_index(label)
            .ok_or_else(|| Error::Data(format!("feature {:?} has no category {:?}", name, label)))?;
        Ok((f, v))
    }
}

/// Splits the leaf containing `at` as described by `node`, recursing with
/// one representative point per branch.
fn rebuild(
    schema: &Schema,
    tree: &mut Tree,
    node: &NodeJson,
    at: Vec<u32>,
    leaves: &mut Vec<(Vec<u32>, LeafJson)>,
) -> Result<()> {
    match node {
        NodeJson::Leaf(l) => {
            leaves.push((at, *l));
            Ok(())
        }
        NodeJson::Split { feature, branches } => {
            let f = schema
                .feature_index(feature)
                .ok_or_else(|| Error::Data(format!("model refers to unknown feature {:?}", feature)))?;
            let q = schema.cardinality(f);
            let mut parts = Vec::with_capacity(branches.len());
            let mut reps = Vec::with_capacity(branches.len());
            for b in branches {
                let values = b
                    .values
                    .iter()
                    .map(|label| {
                        schema
                            .feature(f)
                            .category_index(label)
                            .map(|v| v as usize)
                            .ok_or_else(|| Error::Data(format!("feature {:?} has no category {:?}", feature, label)))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let first = *values
                    .first()
                    .ok_or_else(|| Error::Data("model branch with no values".into()))?;
                let mut rep = at.clone();
                rep[f] = first as u32;
                reps.push(rep);
                parts.push(value_set(q, values));
            }
            let leaf = tree.assign_leaf(&at);
            tree.split_leaf(leaf, f, parts)
                .map_err(|e| Error::Data(format!("model file: {}", e)))?;
            for (b, rep) in branches.iter().zip(reps) {
                rebuild(schema, tree, &b.child, rep, leaves)?;
            }
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TreeHyper {
    Leaf(LeafModelHyper),
    Branch(BranchModelHyper),
}

fn fmt_density(x: f64) -> String {
    format!("{:.6}", x)
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz rendering: internal nodes name their feature, edges carry the
/// branch values and leaves show density, volume and training mass.
pub fn to_dot(model: &ModelFile) -> String {
    let mut out = String::from("digraph model {\n  node [fontname=\"Helvetica\"];\n");
    let n = model.n;
    let leaf_label = |l: &LeafJson| {
        format!(
            "f = {}\\nVol = {}\\nP = {}",
            fmt_density(l.density),
            l.volume,
            fmt_density(if n == 0 { 0.0 } else { l.n as f64 / n as f64 })
        )
    };
    match &model.body {
        ModelBody::Leaf { root, .. } | ModelBody::Branch { root, .. } => {
            let mut next = 0usize;
            fn walk(
                node: &NodeJson,
                out: &mut String,
                next: &mut usize,
                leaf_label: &dyn Fn(&LeafJson) -> String,
            ) -> usize {
                let id = *next;
                *next += 1;
                match node {
                    NodeJson::Leaf(l) => {
                        let _ = writeln!(out, "  n{} [shape=box, label=\"{}\"];", id, leaf_label(l));
                    }
                    NodeJson::Split { feature, branches } => {
                        let _ = writeln!(out, "  n{} [shape=ellipse, label=\"{}\"];", id, dot_escape(feature));
                        for b in branches {
                            let child = walk(&b.child, out, next, leaf_label);
                            let _ = writeln!(
                                out,
                                "  n{} -> n{} [label=\"{}\"];",
                                id,
                                child,
                                dot_escape(&b.values.join(","))
                            );
                        }
                    }
                }
                id
            }
            walk(root, &mut out, &mut next, &leaf_label);
        }
        ModelBody::List {
            rules, default_leaf, ..
        } => {
            for (j, r) in rules.iter().enumerate() {
                let cond = r
                    .conditions
                    .iter()
                    .map(|(k, v)| format!("{} = {}", k, v))
                    .collect::<Vec<_>>()
                    .join(" and ");
                let _ = writeln!(out, "  r{} [shape=diamond, label=\"{}\"];", j, dot_escape(&cond));
                let _ = writeln!(out, "  l{} [shape=box, label=\"{}\"];", j, leaf_label(&r.leaf));
                let _ = writeln!(out, "  r{} -> l{} [label=\"yes\"];", j, j);
                let next = if j + 1 < rules.len() { format!("r{}", j + 1) } else { "default".into() };
                let _ = writeln!(out, "  r{} -> {} [label=\"no\"];", j, next);
            }
            let _ = writeln!(out, "  default [shape=box, label=\"{}\"];", leaf_label(default_leaf));
        }
    }
    out.push_str("}\n");
    out
}

/// Plain-text rendering: indented splits for trees, `if / else if / else`
/// blocks for lists.
pub fn to_text(model: &ModelFile) -> String {
    let mut out = String::new();
    let leaf = |l: &LeafJson| format!("density = {} (n = {}, Vol = {})", fmt_density(l.density), l.n, l.volume);
    match &model.body {
        ModelBody::Leaf { root, .. } | ModelBody::Branch { root, .. } => {
            fn walk(node: &NodeJson, depth: usize, out: &mut String, leaf: &dyn Fn(&LeafJson) -> String) {
                match node {
                    NodeJson::Leaf(l) => {
                        let _ = writeln!(out, "{}{}", "  ".repeat(depth), leaf(l));
                    }
                    NodeJson::Split { feature, branches } => {
                        for b in branches {
                            let _ = writeln!(out, "{}{} in {{{}}}:", "  ".repeat(depth), feature, b.values.join(", "));
                            walk(&b.child, depth + 1, out, leaf);
                        }
                    }
                }
            }
            walk(root, 0, &mut out, &leaf);
        }
        ModelBody::List {
            rules, default_leaf, ..
        } => {
            for (j, r) in rules.iter().enumerate() {
                let cond = r
                    .conditions
                    .iter()
                    .map(|(k, v)| format!("{} = {}", k, v))
                    .collect::<Vec<_>>()
                    .join(" and ");
                let kw = if j == 0 { "if" } else { "else if" };
                let _ = writeln!(out, "{} {} then\n  {}", kw, cond, leaf(&r.leaf));
            }
            if rules.is_empty() {
                let _ = writeln!(out, "{}", leaf(default_leaf));
            } else {
                let _ = writeln!(out, "else\n  {}", leaf(default_leaf));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{gen_sparse_tree_dataset, sparse_tree_ground_truth};
    use crate::evaluation::densities_equivalent;

    fn truth_file() -> (ModelFile, FittedTree) {
        let d = gen_sparse_tree_dataset();
        let fit = FittedTree::new(sparse_tree_ground_truth(), &d);
        let m = ModelFile::from_tree(d.schema(), &fit, -1.0, TreeHyper::Leaf(LeafModelHyper::default()));
        (m, fit)
    }

    #[test]
    fn tree_round_trip() {
        let (m, fit) = truth_file();
        let text = m.to_json_string();
        let back = ModelFile::from_json_str(&text).unwrap();
        assert_eq!(back, m);
        match back.load().unwrap() {
            LoadedModel::Tree(t) => {
                assert_eq!(t.tree, fit.tree);
                assert_eq!(t.stats, fit.stats);
            }
            _ => panic!("expected a tree"),
        }
    }

    #[test]
    fn dot_has_one_box_per_leaf() {
        let (m, _) = truth_file();
        let dot = to_dot(&m);
        assert_eq!(dot.matches("shape=box").count(), 6);
        assert_eq!(dot.matches("Vol = ").count(), 6);
        assert!(dot.contains("f = "));
    }

    #[test]
    fn list_round_trip_and_text() {
        let d = gen_sparse_tree_dataset();
        let a = |c: &[(usize, u32)]| Antecedent::new(c.to_vec()).unwrap();
        let list = RuleList::new(vec![a(&[(0, 0), (1, 1)]), a(&[(1, 1), (2, 1)])]);
        let fit = FittedList::new(list, &d).unwrap();
        let m = ModelFile::from_list(d.schema(), &fit, -2.0, ListModelHyper::default(), f64::INFINITY, false);
        let back = ModelFile::from_json_str(&m.to_json_string()).unwrap();
        let LoadedModel::List(l) = back.load().unwrap() else {
            panic!("expected a list")
        };
        assert_eq!(l.list, fit.list);
        assert!(densities_equivalent(&l, &fit, d.schema()).unwrap());
        let text = to_text(&m);
        assert_eq!(text.matches("if ").count(), 2);
        assert!(text.starts_with("if x1 = 1 and x2 = 2 then"));
        assert!(text.contains("\nelse\n"));
    }
}
