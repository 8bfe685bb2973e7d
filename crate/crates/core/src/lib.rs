//! Sparse piecewise-constant density estimation over categorical and ordinal
//! data: cascaded trees under two Bayesian priors searched by simulated
//! annealing, and density rule lists searched by Metropolis-Hastings, with
//! exact volume accounting and likelihood-based evaluation.

pub mod anneal;
pub mod baselines;
pub mod data;
pub mod enumerate;
pub mod error;
pub mod evaluation;
pub mod exec;
pub mod fit;
pub mod model;
pub mod posterior_branch;
pub mod posterior_leaf;
pub mod rule_list;
pub mod schema;
pub mod special;
pub mod stats;
pub mod tree;

pub use data::{ingest_csv, read_csv, split_dataset, ConfigCounts, Dataset};
pub use error::{Error, Result};
pub use exec::Execution;
pub use schema::{load_schema, FeatureSpec, Schema};
pub use stats::{LeafStat, LeafStats};
pub use tree::Tree;
