//! Leaf volumes of a rule list. Inclusion-exclusion over the earlier rules
//! that can overlap the current one, with domain enumeration as the oracle
//! and as the fallback when the expansion would be too large.

use std::collections::HashMap;

use super::{Antecedent, RuleList};
use crate::error::{Error, Result};
use crate::schema::Schema;

/// Largest domain (or rule region) walked point by point.
pub const ENUMERATION_LIMIT: u64 = 1 << 22;
/// Inclusion-exclusion is used while the number of overlapping earlier rules
/// is at most this, i.e. at most `2^20` signed terms.
pub const INCLUSION_EXCLUSION_MAX_TERMS_LOG2: usize = 20;

const CACHE_CAPACITY: usize = 1 << 18;

/// Volume of the conjunction of `antecedents`: zero if two conditions
/// disagree on a feature, else the product of the cardinalities of the
/// unconstrained features.
pub fn conjunction_volume(schema: &Schema, antecedents: &[&Antecedent]) -> u64 {
    let mut fixed: Vec<Option<u32>> = vec![None; schema.num_features()];
    for a in antecedents {
        for &(f, v) in a.conditions() {
            match fixed[f] {
                Some(w) if w != v => return 0,
                _ => fixed[f] = Some(v),
            }
        }
    }
    free_volume(&schema.cardinalities(), &fixed)
}

fn free_volume(cards: &[usize], fixed: &[Option<u32>]) -> u64 {
    cards
        .iter()
        .zip(fixed)
        .filter(|(_, f)| f.is_none())
        .map(|(&q, _)| q as u64)
        .product()
}

fn compatible(a: &Antecedent, b: &Antecedent) -> bool {
    // both condition lists are sorted by feature
    let (mut i, mut j) = (0, 0);
    let (x, y) = (a.conditions(), b.conditions());
    while i < x.len() && j < y.len() {
        match x[i].0.cmp(&y[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                if x[i].1 != y[j].1 {
                    return false;
                }
                i += 1;
                j += 1;
            }
        }
    }
    true
}

/// Every condition of `b` also appears in `a`, so `a` implies `b`.
fn implies(a: &Antecedent, b: &Antecedent) -> bool {
    b.conditions().iter().all(|c| a.conditions().binary_search(c).is_ok())
}

/// Earlier rules that overlap `rule`, deduplicated and sorted, or `None`
/// when one of them covers `rule` entirely.
fn overlapping<'a>(rule: &Antecedent, earlier: &'a [Antecedent]) -> Option<Vec<&'a Antecedent>> {
    let mut out: Vec<&Antecedent> = Vec::new();
    for e in earlier {
        if !compatible(rule, e) {
            continue;
        }
        if implies(rule, e) {
            return None;
        }
        out.push(e);
    }
    out.sort_unstable();
    out.dedup();
    Some(out)
}

/// Signed sum over subsets of `others`, depth first. A branch whose
/// conjunction is already contradictory contributes nothing further and is
/// pruned.
fn inclusion_exclusion(cards: &[usize], fixed: &mut Vec<Option<u32>>, others: &[&Antecedent]) -> i128 {
    let Some((first, rest)) = others.split_first() else {
        return free_volume(cards, fixed) as i128;
    };
    let without = inclusion_exclusion(cards, fixed, rest);
    let mut touched = Vec::new();
    for &(f, v) in first.conditions() {
        match fixed[f] {
            Some(w) if w != v => {
                for &t in &touched {
                    fixed[t] = None;
                }
                return without;
            }
            Some(_) => {}
            None => {
                fixed[f] = Some(v);
                touched.push(f);
            }
        }
    }
    let with = inclusion_exclusion(cards, fixed, rest);
    for &t in &touched {
        fixed[t] = None;
    }
    without - with
}

/// Counts the points of `rule`'s region not covered by any of `others`.
fn region_by_enumeration(schema: &Schema, rule: &Antecedent, others: &[&Antecedent]) -> Result<u64> {
    let cards = schema.cardinalities();
    let mut point = vec![0u32; cards.len()];
    let free: Vec<usize> = (0..cards.len())
        .filter(|f| rule.conditions().iter().all(|&(g, _)| g != *f))
        .collect();
    let region: u64 = free.iter().map(|&f| cards[f] as u64).product();
    if region > ENUMERATION_LIMIT {
        return Err(Error::Guard(format!(
            "rule overlaps {} earlier rules and its region has {} points (limit {})",
            others.len(),
            region,
            ENUMERATION_LIMIT
        )));
    }
    for &(f, v) in rule.conditions() {
        point[f] = v;
    }
    let mut count = 0;
    for mut idx in 0..region {
        for &f in free.iter().rev() {
            point[f] = (idx % cards[f] as u64) as u32;
            idx /= cards[f] as u64;
        }
        if !others.iter().any(|o| o.matches(&point)) {
            count += 1;
        }
    }
    Ok(count)
}

/// Volume of leaf `i` (1-based) of a list whose first `i` rules are
/// `prefix`: the points satisfying `prefix[i-1]` and none of the earlier
/// rules.
pub fn list_leaf_volume(prefix: &[Antecedent], schema: &Schema) -> Result<u64> {
    let Some((rule, earlier)) = prefix.split_last() else {
        return Err(Error::InvalidArgument("empty rule prefix".into()));
    };
    leaf_volume_inner(rule, earlier, schema, None)
}

fn leaf_volume_inner(
    rule: &Antecedent,
    earlier: &[Antecedent],
    schema: &Schema,
    cache: Option<&mut VolumeCache>,
) -> Result<u64> {
    let Some(others) = overlapping(rule, earlier) else {
        return Ok(0);
    };
    let key = cache.as_ref().map(|_| {
        let mut k = Vec::with_capacity(others.len() + 1);
        k.push(rule.clone());
        k.extend(others.iter().map(|&o| o.clone()));
        k
    });
    if let (Some(c), Some(k)) = (cache.as_ref(), key.as_ref()) {
        if let Some(&v) = c.map.get(k) {
            return Ok(v);
        }
    }
    let v = if others.len() <= INCLUSION_EXCLUSION_MAX_TERMS_LOG2 {
        let cards = schema.cardinalities();
        let mut fixed = vec![None; cards.len()];
        for &(f, v) in rule.conditions() {
            fixed[f] = Some(v);
        }
        let v = inclusion_exclusion(&cards, &mut fixed, &others);
        debug_assert!(v >= 0);
        v as u64
    } else {
        region_by_enumeration(schema, rule, &others)?
    };
    if let (Some(c), Some(k)) = (cache, key) {
        if c.map.len() >= CACHE_CAPACITY {
            c.map.clear();
        }
        c.map.insert(k, v);
    }
    Ok(v)
}

/// Memo of rule-leaf volumes keyed by the rule and the set of earlier rules
/// that overlap it. Rule order among the earlier rules does not matter.
#[derive(Debug, Default, Clone)]
pub struct VolumeCache {
    map: HashMap<Vec<Antecedent>, u64>,
}

impl VolumeCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Volumes of all leaves, default leaf first: `[V_0, V_1, ..., V_m]`.
pub fn list_volumes(list: &RuleList, schema: &Schema, cache: Option<&mut VolumeCache>) -> Result<Vec<u64>> {
    let mut out = Vec::with_capacity(list.len() + 1);
    out.push(0);
    let mut cache = cache;
    for i in 0..list.len() {
        out.push(leaf_volume_inner(
            &list.rules[i],
            &list.rules[..i],
            schema,
            cache.as_deref_mut(),
        )?);
    }
    let covered: u64 = out.iter().sum();
    out[0] = schema.domain_size() - covered;
    Ok(out)
}

/// Volumes by walking every domain point, default leaf first.
pub fn volume_by_enumeration(list: &RuleList, schema: &Schema) -> Result<Vec<u64>> {
    schema.check_enumerable(ENUMERATION_LIMIT)?;
    let mut out = vec![0u64; list.len() + 1];
    let mut point = vec![0u32; schema.num_features()];
    for i in 0..schema.domain_size() {
        schema.point_at(i, &mut point);
        out[list.assign(&point)] += 1;
    }
    Ok(out)
}
