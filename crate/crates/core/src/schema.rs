//! The categorical domain: feature names, category labels, ordinal flags.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub categories: Vec<String>,
    #[serde(default)]
    pub ordinal: bool,
}

impl FeatureSpec {
    pub fn new(name: impl Into<String>, categories: Vec<String>, ordinal: bool) -> Self {
        FeatureSpec {
            name: name.into(),
            categories,
            ordinal,
        }
    }

    pub fn cardinality(&self) -> usize {
        self.categories.len()
    }

    pub fn category_index(&self, label: &str) -> Option<u32> {
        self.categories
            .iter()
            .position(|c| c == label)
            .map(|i| i as u32)
    }
}

/// Validated list of features. Construct through [`Schema::new`] or
/// [`load_schema`]; every instance satisfies the domain invariants.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Schema {
    features: Vec<FeatureSpec>,
    #[serde(skip)]
    domain_size: u64,
}

#[derive(Deserialize)]
struct RawSchema {
    features: Vec<FeatureSpec>,
}

impl<'de> Deserialize<'de> for Schema {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawSchema::deserialize(d)?;
        Schema::new(raw.features).map_err(serde::de::Error::custom)
    }
}

impl Schema {
    pub fn new(features: Vec<FeatureSpec>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Schema("schema has no features".into()));
        }
        let mut names = HashSet::new();
        let mut domain_size: u64 = 1;
        for f in &features {
            if !names.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature name {:?}", f.name)));
            }
            if f.categories.len() < 2 {
                return Err(Error::Schema(format!(
                    "feature {:?} has {} categories; at least 2 are required",
                    f.name,
                    f.categories.len()
                )));
            }
            if f.categories.len() > u32::MAX as usize {
                return Err(Error::Schema(format!("feature {:?} has too many categories", f.name)));
            }
            let mut labels = HashSet::new();
            for c in &f.categories {
                if !labels.insert(c.as_str()) {
                    return Err(Error::Schema(format!(
                        "duplicate category {:?} in feature {:?}",
                        c, f.name
                    )));
                }
            }
            domain_size = domain_size
                .checked_mul(f.categories.len() as u64)
                .ok_or_else(|| Error::Schema("domain size overflows a 64-bit integer".into()))?;
        }
        Ok(Schema {
            features,
            domain_size,
        })
    }

    /// Schema whose categories are labelled "1".."q" for each feature.
    pub fn with_cardinalities(cards: &[usize]) -> Result<Self> {
        let features = cards
            .iter()
            .enumerate()
            .map(|(i, &q)| {
                FeatureSpec::new(
                    format!("x{}", i + 1),
                    (1..=q).map(|v| v.to_string()).collect(),
                    false,
                )
            })
            .collect();
        Schema::new(features)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn feature(&self, j: usize) -> &FeatureSpec {
        &self.features[j]
    }

    pub fn num_features(&self) -> usize {
        self.features.len()
    }

    pub fn cardinality(&self, j: usize) -> usize {
        self.features[j].categories.len()
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.features.iter().map(|f| f.categories.len()).collect()
    }

    pub fn is_ordinal(&self, j: usize) -> bool {
        self.features[j].ordinal
    }

    pub fn domain_size(&self) -> u64 {
        self.domain_size
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    /// Decode a linear index in `0..domain_size` into a point (last feature varies fastest).
    pub fn point_at(&self, mut index: u64, out: &mut [u32]) {
        for j in (0..self.features.len()).rev() {
            let q = self.features[j].categories.len() as u64;
            out[j] = (index % q) as u32;
            index /= q;
        }
    }

    /// Fails unless the domain has at most `limit` points.
    pub fn check_enumerable(&self, limit: u64) -> Result<()> {
        if self.domain_size > limit {
            return Err(Error::Guard(format!(
                "domain of {} points exceeds the enumeration limit of {}",
                self.domain_size, limit
            )));
        }
        Ok(())
    }
}

pub fn load_schema(path: impl AsRef<Path>) -> Result<Schema> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Schema::from_json_str(&text)
}
