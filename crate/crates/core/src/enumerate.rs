//! Exhaustive tree enumeration, used as a correctness oracle for the search.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::schema::Schema;
use crate::tree::{value_set, Tree, ValueSet};

pub const MAX_ENUMERATED_TREES: u128 = 1_000_000;

/// All partitions of `values` into at least two blocks. For ordinal features
/// only partitions into contiguous runs are produced.
pub fn partitions(values: &[usize], ordinal: bool) -> Vec<Vec<Vec<usize>>> {
    let k = values.len();
    let mut out = Vec::new();
    if k < 2 {
        return out;
    }
    if ordinal {
        // every nonempty set of cut positions among the k - 1 gaps
        for mask in 1u64..(1u64 << (k - 1)) {
            let mut blocks = vec![vec![values[0]]];
            for i in 1..k {
                if mask & (1 << (i - 1)) != 0 {
                    blocks.push(Vec::new());
                }
                blocks.last_mut().unwrap().push(values[i]);
            }
            out.push(blocks);
        }
        return out;
    }
    // restricted growth strings
    let mut labels = vec![0usize; k];
    fn rec(i: usize, max: usize, labels: &mut [usize], values: &[usize], out: &mut Vec<Vec<Vec<usize>>>) {
        if i == labels.len() {
            if max >= 1 {
                let mut blocks = vec![Vec::new(); max + 1];
                for (v, &l) in values.iter().zip(labels.iter()) {
                    blocks[l].push(*v);
                }
                out.push(blocks);
            }
            return;
        }
        for l in 0..=max + 1 {
            labels[i] = l;
            rec(i + 1, max.max(l), labels, values, out);
        }
    }
    labels[0] = 0;
    rec(1, 0, &mut labels, values, &mut out);
    out
}

/// Number of trees reachable with leaves no deeper than `depth_cap`,
/// saturating at `u128::MAX`.
pub fn count_trees(schema: &Schema, depth_cap: usize) -> u128 {
    let ordinal: Vec<bool> = (0..schema.num_features()).map(|j| schema.is_ordinal(j)).collect();
    let mut memo = HashMap::new();
    count_rec(&schema.cardinalities(), depth_cap, &ordinal, &mut memo)
}

fn count_rec(
    sizes: &[usize],
    depth: usize,
    ordinal: &[bool],
    memo: &mut HashMap<(Vec<usize>, usize), u128>,
) -> u128 {
    if depth == 0 {
        return 1;
    }
    if let Some(&c) = memo.get(&(sizes.to_vec(), depth)) {
        return c;
    }
    let mut total: u128 = 1;
    for j in 0..sizes.len() {
        if sizes[j] < 2 {
            continue;
        }
        let idx: Vec<usize> = (0..sizes[j]).collect();
        for blocks in partitions(&idx, ordinal[j]) {
            let mut prod: u128 = 1;
            for b in &blocks {
                let mut child = sizes.to_vec();
                child[j] = b.len();
                prod = prod.saturating_mul(count_rec(&child, depth - 1, ordinal, memo));
            }
            total = total.saturating_add(prod);
        }
    }
    memo.insert((sizes.to_vec(), depth), total);
    total
}

/// Calls `visit` once for every structurally distinct tree whose leaves are
/// at depth at most `depth_cap`.
pub fn for_each_tree(schema: &Schema, depth_cap: usize, mut visit: impl FnMut(&Tree)) -> Result<()> {
    let count = count_trees(schema, depth_cap);
    if count > MAX_ENUMERATED_TREES {
        return Err(Error::Guard(format!(
            "{} trees exceed the enumeration limit of {}",
            count, MAX_ENUMERATED_TREES
        )));
    }
    let root = Tree::root_only(schema);
    let rep = vec![0u32; schema.num_features()];
    expand(&root, &[rep], depth_cap, &mut visit);
    Ok(())
}

pub fn enumerate_trees(schema: &Schema, depth_cap: usize) -> Result<Vec<Tree>> {
    let mut out = Vec::new();
    for_each_tree(schema, depth_cap, |t| out.push(t.clone()))?;
    Ok(out)
}

/// Each open leaf (given by a representative point) is either closed or split
/// in every possible way; the first open leaf is decided first, so every
/// tree has exactly one decision sequence.
fn expand(tree: &Tree, open: &[Vec<u32>], depth_cap: usize, visit: &mut impl FnMut(&Tree)) {
    let Some((rep, rest)) = open.split_first() else {
        visit(tree);
        return;
    };
    expand(tree, rest, depth_cap, visit);
    let leaf = tree.assign_leaf(rep);
    if tree.node(leaf).depth() >= depth_cap {
        return;
    }
    let sigma = tree.node(leaf).sigma().to_vec();
    for (j, allowed) in sigma.iter().enumerate() {
        let values: Vec<usize> = allowed.ones().collect();
        let q = allowed.len();
        for blocks in partitions(&values, tree.is_ordinal(j)) {
            let parts: Vec<ValueSet> = blocks.iter().map(|b| value_set(q, b.iter().copied())).collect();
            let mut t = tree.clone();
            t.split_leaf(leaf, j, parts).expect("enumerated partitions are valid");
            let mut next: Vec<Vec<u32>> = blocks
                .iter()
                .map(|b| {
                    let mut r = rep.clone();
                    r[j] = b[0] as u32;
                    r
                })
                .collect();
            next.extend_from_slice(rest);
            expand(&t, &next, depth_cap, visit);
        }
    }
}
