//! Datasets of categorical points, CSV I/O, and seeded splitting.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::schema::Schema;

/// Rows of category indices over a shared schema. Row-major, `p` values per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    schema: Arc<Schema>,
    values: Vec<u32>,
}

impl Dataset {
    pub fn new(schema: Arc<Schema>, rows: Vec<Vec<u32>>) -> Result<Self> {
        let p = schema.num_features();
        let mut values = Vec::with_capacity(rows.len() * p);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::Data(format!(
                    "row {} has {} values, schema has {} features",
                    r + 1,
                    row.len(),
                    p
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                if v as usize >= schema.cardinality(j) {
                    return Err(Error::Data(format!(
                        "row {}, feature {:?}: index {} out of range",
                        r + 1,
                        schema.feature(j).name,
                        v
                    )));
                }
            }
            values.extend_from_slice(row);
        }
        Ok(Dataset { schema, values })
    }

    /// Empty dataset over `schema`; useful as a builder seed.
    pub fn empty(schema: Arc<Schema>) -> Self {
        Dataset {
            schema,
            values: Vec::new(),
        }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn schema_arc(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.schema.num_features()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, i: usize) -> &[u32] {
        let p = self.schema.num_features();
        &self.values[i * p..(i + 1) * p]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[u32]> + '_ {
        self.values.chunks_exact(self.schema.num_features())
    }

    fn subset(&self, indices: &[usize]) -> Dataset {
        let mut values = Vec::with_capacity(indices.len() * self.schema.num_features());
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Dataset {
            schema: Arc::clone(&self.schema),
            values,
        }
    }

    /// Distinct configurations with multiplicities, in lexicographic order.
    pub fn config_counts(&self) -> ConfigCounts {
        let mut map: BTreeMap<&[u32], u64> = BTreeMap::new();
        for row in self.rows() {
            *map.entry(row).or_default() += 1;
        }
        ConfigCounts {
            points: map.into_iter().map(|(k, v)| (k.to_vec(), v)).collect(),
            n: self.len() as u64,
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let header: Vec<&str> = self.schema.features().iter().map(|f| f.name.as_str()).collect();
        w.write_record(&header).map_err(csv_err)?;
        for row in self.rows() {
            let record: Vec<&str> = row
                .iter()
                .enumerate()
                .map(|(j, &v)| self.schema.feature(j).categories[v as usize].as_str())
                .collect();
            w.write_record(&record).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Data(e.to_string()))?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// A dataset collapsed to its distinct configurations. All scoring inner loops
/// run over this form, so cost scales with distinct points rather than rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigCounts {
    pub points: Vec<(Vec<u32>, u64)>,
    pub n: u64,
}

fn csv_err(e: csv::Error) -> Error {
    Error::Data(e.to_string())
}

/// Reads a headered CSV, mapping labels to category indices. Columns may
/// appear in any order but must be exactly the schema's features.
pub fn read_csv<R: Read>(reader: R, schema: Arc<Schema>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(csv_err)?.clone();
    let p = schema.num_features();
    // column position -> feature index
    let mut column_feature = Vec::with_capacity(header.len());
    let mut seen = vec![false; p];
    for name in header.iter() {
        let j = schema
            .feature_index(name)
            .ok_or_else(|| Error::Data(format!("unknown column {:?}", name)))?;
        if seen[j] {
            return Err(Error::Data(format!("duplicate column {:?}", name)));
        }
        seen[j] = true;
        column_feature.push(j);
    }
    if let Some(j) = seen.iter().position(|s| !s) {
        return Err(Error::Data(format!(
            "missing column {:?}",
            schema.feature(j).name
        )));
    }
    let lookup: Vec<HashMap<&str, u32>> = schema
        .features()
        .iter()
        .map(|f| {
            f.categories
                .iter()
                .enumerate()
                .map(|(i, c)| (c.as_str(), i as u32))
                .collect()
        })
        .collect();

    let mut values = Vec::new();
    let mut row = vec![0u32; p];
    for (r, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_err)?;
        if record.len() != p {
            return Err(Error::Data(format!(
                "row {} has {} fields, expected {}",
                r + 1,
                record.len(),
                p
            )));
        }
        for (c, field) in record.iter().enumerate() {
            let j = column_feature[c];
            row[j] = *lookup[j].get(field).ok_or_else(|| {
                Error::Data(format!(
                    "row {}, column {:?}: value {:?} is not a category of this feature",
                    r + 1,
                    schema.feature(j).name,
                    field
                ))
            })?;
        }
        values.extend_from_slice(&row);
    }
    if values.is_empty() {
        return Err(Error::Data("empty dataset".into()));
    }
    Ok(Dataset { schema, values })
}

pub fn ingest_csv(path: impl AsRef<Path>, schema: Arc<Schema>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(std::io::BufReader::new(file), schema)
}

/// Seeded random partition. The first part gets `floor(fraction * n)` rows,
/// the second the remainder; each part keeps the original row order.
pub fn split_dataset(data: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let n = data.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "cannot split a dataset of {} rows",
            n
        )));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split fraction {} is not in (0, 1)",
            fraction
        )));
    }
    let k = (fraction * n as f64).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (a, b) = order.split_at_mut(k);
    a.sort_unstable();
    b.sort_unstable();
    Ok((data.subset(a), data.subset(b)))
}
