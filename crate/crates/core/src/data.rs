//! Dataset ingestion, vertical partitioning and synthetic data.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree_build::LocalData;

/// A plaintext table: named feature columns plus labels.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
    /// Index of the source CSV column each feature came from (one-hot
    /// expansions share their source).
    pub source: Vec<usize>,
    /// CSV header names, indexed by source column.
    #[serde(default)]
    pub headers: Vec<String>,
}

impl Dataset {
    pub fn rows(&self) -> usize {
        self.columns.first().map_or(self.labels.len(), |c| c.len())
    }

    pub fn take_rows(&self, idx: &[usize]) -> Dataset {
        Dataset {
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| idx.iter().map(|&i| c[i]).collect()).collect(),
            labels: idx.iter().filter_map(|&i| self.labels.get(i).copied()).collect(),
            source: self.source.clone(),
            headers: self.headers.clone(),
        }
    }

    /// Scale every column to `[0, 1]`; constant columns become 0. Returns
    /// the `(min, max)` used per column.
    pub fn min_max(&mut self) -> Vec<(f64, f64)> {
        self.columns.iter_mut().map(|c| min_max(c)).collect()
    }

    /// Apply previously computed `(min, max)` bounds.
    pub fn scale_with(&mut self, bounds: &[(f64, f64)]) -> Result<()> {
        if bounds.len() != self.columns.len() {
            return Err(Error::Shape { left: bounds.len(), right: self.columns.len() });
        }
        for (c, &(lo, hi)) in self.columns.iter_mut().zip(bounds) {
            scale(c, lo, hi);
        }
        Ok(())
    }
}

pub fn min_max(c: &mut [f64]) -> (f64, f64) {
    let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    scale(c, lo, hi);
    (lo, hi)
}

fn scale(c: &mut [f64], lo: f64, hi: f64) {
    let span = hi - lo;
    for v in c.iter_mut() {
        *v = if span > 0.0 { (*v - lo) / span } else { 0.0 };
    }
}

fn is_missing(s: &str) -> bool {
    let t = s.trim();
    t.is_empty() || t == "?" || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan")
}

/// Read a CSV with a header row. `categorical` columns are one-hot encoded
/// (levels in sorted order). Rows with missing values are rejected.
pub fn read_csv(path: &Path, label: &str, categorical: &[String]) -> Result<Dataset> {
    read_table(path, Some(label), categorical)
}

/// Like [`read_csv`]; without a label name (or when the named label column
/// is absent and `label` is `None`) the labels stay empty.
pub fn read_table(path: &Path, label: Option<&str>, categorical: &[String]) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let label_idx = match label {
        Some(l) => Some(
            header.iter().position(|h| h == l).ok_or_else(|| Error::Data(format!("label column '{l}' not found")))?,
        ),
        None => None,
    };
    for c in categorical {
        if !header.contains(c) {
            return Err(Error::Data(format!("categorical column '{c}' not found")));
        }
    }
    let mut raw: Vec<Vec<String>> = vec![Vec::new(); header.len()];
    let mut missing = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::Data(format!("row {} has {} fields, header has {}", row + 1, rec.len(), header.len())));
        }
        if rec.iter().any(is_missing) {
            missing.push(row + 1);
            continue;
        }
        for (c, v) in rec.iter().enumerate() {
            raw[c].push(v.trim().to_string());
        }
    }
    if !missing.is_empty() {
        let shown: Vec<String> = missing.iter().take(20).map(|r| r.to_string()).collect();
        return Err(Error::Data(format!(
            "{} rows have missing values (data rows {}{})",
            missing.len(),
            shown.join(", "),
            if missing.len() > 20 { ", ..." } else { "" }
        )));
    }
    let labels = match label_idx {
        Some(i) => encode_labels(&raw[i])?,
        None => Vec::new(),
    };
    let mut ds = Dataset { labels, headers: header.clone(), ..Default::default() };
    for (c, name) in header.iter().enumerate() {
        if Some(c) == label_idx {
            continue;
        }
        if categorical.contains(name) {
            let levels: Vec<&String> = raw[c].iter().collect::<std::collections::BTreeSet<_>>().into_iter().collect();
            for level in levels {
                ds.names.push(format!("{name}={level}"));
                ds.columns.push(raw[c].iter().map(|v| if v == level { 1.0 } else { 0.0 }).collect());
                ds.source.push(c);
            }
        } else {
            let col = raw[c]
                .iter()
                .enumerate()
                .map(|(r, v)| {
                    v.parse::<f64>()
                        .map_err(|_| Error::Data(format!("column '{name}' row {}: '{v}' is not numeric", r + 1)))
                })
                .collect::<Result<Vec<f64>>>()?;
            ds.names.push(name.clone());
            ds.columns.push(col);
            ds.source.push(c);
        }
    }
    Ok(ds)
}

/// Numeric labels pass through; otherwise exactly two levels map to 0 and 1
/// in sorted order.
fn encode_labels(raw: &[String]) -> Result<Vec<f64>> {
    if let Ok(v) = raw.iter().map(|s| s.parse::<f64>()).collect::<std::result::Result<Vec<_>, _>>() {
        return Ok(v);
    }
    let levels: std::collections::BTreeSet<&str> = raw.iter().map(|s| s.trim_end_matches('.')).collect();
    if levels.len() != 2 {
        return Err(Error::Data(format!("non-numeric label needs exactly 2 levels, found {}", levels.len())));
    }
    let hi = *levels.iter().last().unwrap();
    Ok(raw.iter().map(|s| if s.trim_end_matches('.') == hi { 1.0 } else { 0.0 }).collect())
}

/// How source columns are spread over participants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionPlan {
    /// Contiguous blocks of source columns in these proportions, P1 first.
    Fractions(Vec<f64>),
    /// Source column name → holding parties (1-based). A column listed for
    /// several parties is split-owned by the lowest index.
    Explicit(BTreeMap<String, Vec<usize>>),
}

impl Default for PartitionPlan {
    fn default() -> Self {
        PartitionPlan::Fractions(vec![0.1, 0.2, 0.3, 0.4])
    }
}

impl PartitionPlan {
    pub fn parties(&self) -> usize {
        match self {
            PartitionPlan::Fractions(f) => f.len(),
            PartitionPlan::Explicit(m) => m.values().flatten().copied().max().unwrap_or(0),
        }
    }
}

/// Per-party feature assignment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    /// Feature indices (into the dataset) owned by each party, P1 first.
    pub features: Vec<Vec<usize>>,
    /// Features held by a party but split-owned by another; kept out of
    /// candidate scanning.
    pub dropped_duplicates: Vec<(usize, usize)>,
}

pub fn partition(ds: &Dataset, header_names: &[String], plan: &PartitionPlan) -> Result<Partition> {
    let parties = plan.parties();
    if parties < 2 {
        return Err(Error::Config(format!("a partition needs at least 2 parties, got {parties}")));
    }
    let mut sources: Vec<usize> = ds.source.clone();
    sources.dedup();
    let source_owner: BTreeMap<usize, usize> = match plan {
        PartitionPlan::Fractions(f) => {
            if f.iter().any(|&x| !(x >= 0.0)) {
                return Err(Error::Config("partition fractions must be non-negative".into()));
            }
            let total: f64 = f.iter().sum();
            let n = sources.len();
            let mut bounds = Vec::new();
            let mut acc = 0.0;
            for x in f {
                acc += x / total;
                bounds.push((acc * n as f64).round() as usize);
            }
            sources
                .iter()
                .enumerate()
                .map(|(i, &s)| (s, bounds.iter().position(|&b| i < b).unwrap_or(parties - 1)))
                .collect()
        }
        PartitionPlan::Explicit(map) => {
            let mut out = BTreeMap::new();
            for &s in &sources {
                let name = header_names
                    .get(s)
                    .ok_or_else(|| Error::Config(format!("source column {s} has no name")))?;
                let holders = map
                    .get(name)
                    .ok_or_else(|| Error::Config(format!("column '{name}' is not assigned to any party")))?;
                let owner = holders
                    .iter()
                    .copied()
                    .min()
                    .ok_or_else(|| Error::Config(format!("column '{name}' has an empty holder list")))?;
                if owner == 0 {
                    return Err(Error::Config("parties are numbered from 1".into()));
                }
                out.insert(s, owner - 1);
            }
            out
        }
    };
    let mut features = vec![Vec::new(); parties];
    for (f, s) in ds.source.iter().enumerate() {
        features[source_owner[s]].push(f);
    }
    let mut dropped = Vec::new();
    if let PartitionPlan::Explicit(map) = plan {
        for (f, s) in ds.source.iter().enumerate() {
            for &holder in &map[&header_names[*s]] {
                if holder - 1 != source_owner[s] {
                    dropped.push((holder, f));
                }
            }
        }
    }
    Ok(Partition { features, dropped_duplicates: dropped })
}

/// Cut the dataset into per-party local data. Labels go to P1.
pub fn split_vertical(ds: &Dataset, part: &Partition) -> Result<Vec<LocalData>> {
    part.features
        .iter()
        .enumerate()
        .map(|(m, feats)| {
            LocalData::new(
                ds.rows(),
                feats.iter().map(|&f| ds.columns[f].clone()).collect(),
                (m == 0).then(|| ds.labels.clone()),
            )
        })
        .collect()
}

/// Stratified train/test split: each class is shuffled and cut separately,
/// so both sides keep the class ratio. Returns sorted row indices.
pub fn stratified_split(labels: &[f64], test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut by_class: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, y) in labels.iter().enumerate() {
        by_class.entry(y.to_bits()).or_default().push(i);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (_, mut idx) in by_class {
        idx.shuffle(&mut rng);
        let cut = (idx.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&idx[..cut]);
        train.extend_from_slice(&idx[cut..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Binary classification data: features uniform in `[0, 1]`, label from a
/// noisy random linear score with a few interaction terms.
pub fn synthetic_classification(rows: usize, features: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let columns: Vec<Vec<f64>> = (0..features).map(|_| (0..rows).map(|_| rng.gen::<f64>()).collect()).collect();
    let weights: Vec<f64> = (0..features).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let labels = (0..rows)
        .map(|i| {
            let mut z: f64 = (0..features).map(|j| weights[j] * (columns[j][i] - 0.5)).sum();
            if features >= 2 {
                z += 1.5 * (columns[0][i] - 0.5) * (columns[1][i] - 0.5) * 4.0;
            }
            z += rng.gen_range(-0.5..0.5);
            if z > 0.0 {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Dataset {
        names: (0..features).map(|j| format!("x{j}")).collect(),
        columns,
        labels,
        source: (0..features).collect(),
        headers: (0..features).map(|j| format!("x{j}")).collect(),
    }
}

/// Regression counterpart of [`synthetic_classification`].
pub fn synthetic_regression(rows: usize, features: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let columns: Vec<Vec<f64>> = (0..features).map(|_| (0..rows).map(|_| rng.gen::<f64>()).collect()).collect();
    let weights: Vec<f64> = (0..features).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let labels = (0..rows)
        .map(|i| (0..features).map(|j| weights[j] * columns[j][i]).sum::<f64>() + rng.gen_range(-0.1..0.1))
        .collect();
    Dataset {
        names: (0..features).map(|j| format!("x{j}")).collect(),
        columns,
        labels,
        source: (0..features).collect(),
        headers: (0..features).map(|j| format!("x{j}")).collect(),
    }
}

/// Write a dataset as CSV with a trailing `label` column.
pub fn write_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = ds.names.clone();
    header.push("label".into());
    w.write_record(&header)?;
    for i in 0..ds.rows() {
        let mut rec: Vec<String> = ds.columns.iter().map(|c| c[i].to_string()).collect();
        rec.push(ds.labels[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn toy_csv(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn two_features_two_parties() {
        let f = toy_csv("a,b,y\n1,2,0\n2,3,1\n3,1,0\n4,5,1\n");
        let ds = read_csv(f.path(), "y", &[]).unwrap();
        let part = partition(&ds, &["a".into(), "b".into(), "y".into()], &PartitionPlan::Fractions(vec![0.5, 0.5])).unwrap();
        assert_eq!(part.features, vec![vec![0], vec![1]]);
        let local = split_vertical(&ds, &part).unwrap();
        assert!(local[0].labels.is_some() && local[1].labels.is_none());
    }

    #[test]
    fn min_max_example() {
        let mut c = vec![1.0, 5.0, 9.0];
        min_max(&mut c);
        assert_eq!(c, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn categorical_levels_become_columns_of_the_same_party() {
        let f = toy_csv("num,color,y\n1,red,0\n2,green,1\n3,blue,0\n4,red,1\n");
        let ds = read_csv(f.path(), "y", &["color".into()]).unwrap();
        assert_eq!(ds.names, vec!["num", "color=blue", "color=green", "color=red"]);
        let part = partition(&ds, &["num".into(), "color".into(), "y".into()], &PartitionPlan::Fractions(vec![0.5, 0.5])).unwrap();
        assert_eq!(part.features, vec![vec![0], vec![1, 2, 3]]);
    }

    #[test]
    fn missing_values_are_reported_by_row() {
        let f = toy_csv("a,y\n1,0\n,1\n3,?\n");
        let err = read_csv(f.path(), "y", &[]).unwrap_err().to_string();
        assert!(err.contains("2 rows") && err.contains("2, 3"), "{err}");
    }

    #[test]
    fn absent_label_is_an_error() {
        let f = toy_csv("a,b\n1,2\n");
        assert!(read_csv(f.path(), "y", &[]).is_err());
    }

    #[test]
    fn overlapping_columns_go_to_lowest_party() {
        let f = toy_csv("a,b,y\n1,2,0\n2,3,1\n");
        let ds = read_csv(f.path(), "y", &[]).unwrap();
        let plan = PartitionPlan::Explicit(BTreeMap::from([("a".into(), vec![2, 1]), ("b".into(), vec![2])]));
        let part = partition(&ds, &["a".into(), "b".into(), "y".into()], &plan).unwrap();
        assert_eq!(part.features, vec![vec![0], vec![1]]);
        assert_eq!(part.dropped_duplicates, vec![(2, 0)]);
    }

    #[test]
    fn default_plan_on_ten_columns() {
        let ds = synthetic_classification(10, 10, 1);
        let part = partition(&ds, &ds.names, &PartitionPlan::default()).unwrap();
        let sizes: Vec<usize> = part.features.iter().map(|f| f.len()).collect();
        assert_eq!(sizes, vec![1, 2, 3, 4]);
    }

    #[test]
    fn stratification_keeps_class_ratio() {
        let ds = synthetic_classification(1000, 4, 3);
        let (train, test) = stratified_split(&ds.labels, 0.3, 9);
        let ratio = |idx: &[usize]| idx.iter().map(|&i| ds.labels[i]).sum::<f64>() / idx.len() as f64;
        assert_eq!(train.len() + test.len(), 1000);
        assert!((ratio(&train) - ratio(&test)).abs() < 0.01);
    }
}
