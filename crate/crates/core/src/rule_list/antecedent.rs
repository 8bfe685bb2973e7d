use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::schema::Schema;

/// Conjunction of `feature == value` conditions, at most one per feature,
/// kept sorted by feature.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Antecedent {
    conditions: Vec<(usize, u32)>,
}

impl Antecedent {
    pub fn new(mut conditions: Vec<(usize, u32)>) -> Result<Self> {
        if conditions.is_empty() {
            return Err(Error::InvalidArgument("an antecedent needs at least one condition".into()));
        }
        conditions.sort_unstable();
        if conditions.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidArgument(
                "an antecedent may constrain each feature at most once".into(),
            ));
        }
        Ok(Antecedent { conditions })
    }

    pub fn conditions(&self) -> &[(usize, u32)] {
        &self.conditions
    }

    pub fn cardinality(&self) -> usize {
        self.conditions.len()
    }

    pub fn matches(&self, point: &[u32]) -> bool {
        self.conditions.iter().all(|&(f, v)| point[f] == v)
    }

    pub fn is_valid_for(&self, schema: &Schema) -> bool {
        self.conditions
            .iter()
            .all(|&(f, v)| f < schema.num_features() && (v as usize) < schema.cardinality(f))
    }
}

pub const MAX_ANTECEDENTS: u64 = 10_000_000;

/// `|A| = sum_{j=0}^{H} A_j` where `A_j` sums `prod q_t` over feature subsets
/// of size `j` (elementary symmetric polynomials of the cardinalities). The
/// `j = 0` term contributes 1.
pub fn antecedent_count(schema: &Schema, max_card: usize) -> Result<u64> {
    let p = schema.num_features();
    if max_card > p {
        return Err(Error::InvalidArgument(format!(
            "max antecedent size {} exceeds the {} features",
            max_card, p
        )));
    }
    let overflow = || Error::Guard("antecedent count overflows a 64-bit integer".into());
    // e[j] = A_j over the features seen so far
    let mut e = vec![0u64; max_card + 1];
    e[0] = 1;
    for q in schema.cardinalities() {
        for j in (1..=max_card).rev() {
            let add = e[j - 1].checked_mul(q as u64).ok_or_else(overflow)?;
            e[j] = e[j].checked_add(add).ok_or_else(overflow)?;
        }
    }
    e.iter()
        .try_fold(0u64, |acc, &x| acc.checked_add(x))
        .ok_or_else(overflow)
}

/// Every antecedent of size 1..=H, ordered by size, then feature subset,
/// then values. With `min_support`, antecedents matching fewer training
/// points are dropped.
pub fn mine_antecedents(
    schema: &Schema,
    max_card: usize,
    min_support: Option<u64>,
    data: Option<&Dataset>,
) -> Result<Vec<Antecedent>> {
    let total = antecedent_count(schema, max_card)?;
    if total > MAX_ANTECEDENTS {
        return Err(Error::Guard(format!(
            "{} antecedents exceed the mining limit of {}",
            total, MAX_ANTECEDENTS
        )));
    }
    let support = match (min_support, data) {
        (Some(_), None) => {
            return Err(Error::InvalidArgument("min_support requires training data".into()))
        }
        (Some(s), Some(d)) => Some((s, d.config_counts())),
        _ => None,
    };
    let p = schema.num_features();
    let mut out = Vec::with_capacity(total as usize);
    for size in 1..=max_card {
        let mut subset: Vec<usize> = (0..size).collect();
        loop {
            let mut values = vec![0u32; size];
            loop {
                let a = Antecedent {
                    conditions: subset.iter().copied().zip(values.iter().copied()).collect(),
                };
                let keep = match &support {
                    Some((min, counts)) => {
                        counts.points.iter().filter(|(pt, _)| a.matches(pt)).map(|(_, w)| w).sum::<u64>()
                            >= *min
                    }
                    None => true,
                };
                if keep {
                    out.push(a);
                }
                // odometer over values, last position fastest
                let mut k = size;
                loop {
                    if k == 0 {
                        break;
                    }
                    k -= 1;
                    values[k] += 1;
                    if (values[k] as usize) < schema.cardinality(subset[k]) {
                        break;
                    }
                    values[k] = 0;
                    if k == 0 {
                        k = usize::MAX;
                        break;
                    }
                }
                if k == usize::MAX {
                    break;
                }
            }
            // next combination of `size` features out of p
            let mut i = size;
            while i > 0 && subset[i - 1] == p - size + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            subset[i - 1] += 1;
            for k in i..size {
                subset[k] = subset[k - 1] + 1;
            }
        }
    }
    Ok(out)
}

/// The pre-mined antecedent collection a rule list draws from.
#[derive(Debug, Clone)]
pub struct AntecedentUniverse {
    antecedents: Vec<Antecedent>,
    index: HashMap<Antecedent, usize>,
    /// `by_card[c]` = indices of the antecedents of size c.
    by_card: Vec<Vec<usize>>,
}

impl AntecedentUniverse {
    pub fn new(antecedents: Vec<Antecedent>) -> Result<Self> {
        let mut index = HashMap::with_capacity(antecedents.len());
        let mut by_card = Vec::new();
        for (i, a) in antecedents.iter().enumerate() {
            if index.insert(a.clone(), i).is_some() {
                return Err(Error::InvalidArgument("duplicate antecedent in universe".into()));
            }
            if by_card.len() <= a.cardinality() {
                by_card.resize(a.cardinality() + 1, Vec::new());
            }
            by_card[a.cardinality()].push(i);
        }
        Ok(AntecedentUniverse {
            antecedents,
            index,
            by_card,
        })
    }

    pub fn mine(schema: &Schema, max_card: usize, min_support: Option<u64>, data: Option<&Dataset>) -> Result<Self> {
        Self::new(mine_antecedents(schema, max_card, min_support, data)?)
    }

    pub fn antecedents(&self) -> &[Antecedent] {
        &self.antecedents
    }

    pub fn get(&self, i: usize) -> &Antecedent {
        &self.antecedents[i]
    }

    pub fn index_of(&self, a: &Antecedent) -> Option<usize> {
        self.index.get(a).copied()
    }

    /// Usable antecedents (size >= 1).
    pub fn len(&self) -> usize {
        self.antecedents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.antecedents.is_empty()
    }

    /// `|A|` including the size-0 term, the truncation point of the list-length prior.
    pub fn size_with_empty(&self) -> u64 {
        self.antecedents.len() as u64 + 1
    }

    pub fn count_with_cardinality(&self, c: usize) -> usize {
        self.by_card.get(c).map_or(0, Vec::len)
    }

    pub fn with_cardinality(&self, c: usize) -> &[usize] {
        self.by_card.get(c).map_or(&[], Vec::as_slice)
    }

    pub fn max_cardinality(&self) -> usize {
        self.by_card.len().saturating_sub(1)
    }
}
