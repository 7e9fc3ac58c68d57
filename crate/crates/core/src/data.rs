//! Labeled feature matrices, CSV ingestion and train/test splitting.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::stream_rng;

pub const DEFAULT_LABEL_COLUMN: &str = "label";

/// An `n x p` feature matrix with one opaque string label per row.
///
/// Class ordinals follow the lexicographic order of the label strings, so the
/// smallest label is class 0 (the reference class of every classifier).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: DMatrix<f64>,
    labels: Vec<String>,
    classes: Vec<String>,
    class_of: Vec<usize>,
    feature_names: Vec<String>,
}

impl LabeledDataset {
    pub fn new(features: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        let names = (0..features.ncols()).map(|j| format!("x{}", j + 1)).collect();
        Self::with_feature_names(features, labels, names)
    }

    pub fn with_feature_names(
        features: DMatrix<f64>,
        labels: Vec<String>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let (n, p) = features.shape();
        if labels.len() != n {
            return Err(Error::Validation(format!(
                "{} labels for {} rows",
                labels.len(),
                n
            )));
        }
        if n < 2 {
            return Err(Error::InsufficientData(format!("need at least 2 rows, got {n}")));
        }
        if p == 0 {
            return Err(Error::Validation("dataset has no feature columns".into()));
        }
        if feature_names.len() != p {
            return Err(Error::Validation("feature name count does not match p".into()));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite feature at row {}, column {}",
                pos % n,
                pos / n
            )));
        }
        let classes: Vec<String> = labels
            .iter()
            .cloned()
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        let index: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
        let class_of = labels.iter().map(|l| index[l.as_str()]).collect();
        Ok(LabeledDataset {
            features,
            labels,
            classes,
            class_of,
            feature_names,
        })
    }

    /// Builds a dataset from per-class blocks; block `k` gets label `names[k]`.
    pub fn from_class_blocks(blocks: &[&DMatrix<f64>], names: &[&str]) -> Result<Self> {
        if blocks.is_empty() || blocks.len() != names.len() {
            return Err(Error::Validation("one name per class block required".into()));
        }
        let p = blocks[0].ncols();
        if blocks.iter().any(|b| b.ncols() != p) {
            return Err(Error::Validation("class blocks differ in width".into()));
        }
        let n: usize = blocks.iter().map(|b| b.nrows()).sum();
        let mut features = DMatrix::zeros(n, p);
        let mut labels = Vec::with_capacity(n);
        let mut row = 0;
        for (block, name) in blocks.iter().zip(names) {
            features.rows_mut(row, block.nrows()).copy_from(block);
            row += block.nrows();
            labels.extend(std::iter::repeat_n(name.to_string(), block.nrows()));
        }
        Self::new(features, labels)
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn p(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Sorted distinct labels; position is the class ordinal.
    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// Class ordinal of every row.
    pub fn class_ordinals(&self) -> &[usize] {
        &self.class_of
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        for &c in &self.class_of {
            counts[c] += 1;
        }
        counts
    }

    pub fn rows_of_class(&self, class: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.class_of[i] == class).collect()
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.features.row(i).transpose()
    }

    /// Rows at `indices`, in that order. Class ordinals are recomputed from the
    /// retained labels.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let features = self.features.select_rows(indices);
        let labels = indices.iter().map(|&i| self.labels[i].clone()).collect();
        Self::with_feature_names(features, labels, self.feature_names.clone())
    }

    /// Returns a copy with every feature column centered, and the removed means.
    pub fn centered(&self) -> (Self, DVector<f64>) {
        let means = self.features.row_mean().transpose();
        let mut features = self.features.clone();
        for mut r in features.row_iter_mut() {
            r -= &means.transpose();
        }
        let ds = LabeledDataset {
            features,
            ..self.clone()
        };
        (ds, means)
    }
}

/// A parsed CSV table whose label column may be absent.
#[derive(Debug, Clone)]
pub struct CsvTable {
    pub feature_names: Vec<String>,
    pub features: DMatrix<f64>,
    pub labels: Option<Vec<String>>,
}

/// Loads a CSV with a header row. Every column except `label_column` is a real
/// feature, kept in header order.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let table = read_table(path, Some(label_column), true)?;
    let labels = table.labels.expect("label column is required");
    LabeledDataset::with_feature_names(table.features, labels, table.feature_names)
}

/// Like [`load_csv`], but the label column is optional (prediction inputs).
pub fn read_table(
    path: impl AsRef<Path>,
    label_column: Option<&str>,
    label_required: bool,
) -> Result<CsvTable> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let mut seen = HashSet::new();
    for h in &header {
        if !seen.insert(h.as_str()) {
            return Err(Error::Schema(format!("duplicate column name '{h}'")));
        }
    }
    let label_idx = label_column.and_then(|l| header.iter().position(|h| h == l));
    if label_required && label_idx.is_none() {
        return Err(Error::Schema(format!(
            "label column '{}' not found in header",
            label_column.unwrap_or_default()
        )));
    }
    let feature_cols: Vec<usize> = (0..header.len()).filter(|&j| Some(j) != label_idx).collect();
    let feature_names: Vec<String> = feature_cols.iter().map(|&j| header[j].clone()).collect();

    let mut values: Vec<f64> = Vec::new();
    let mut labels = Vec::new();
    let mut n = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        // Row numbers are 1-based and count the header line.
        let row = r + 2;
        if record.len() != header.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                row,
                column: String::new(),
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        for &j in &feature_cols {
            let cell = &record[j];
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                row,
                column: header[j].clone(),
                message: format!("'{cell}' is not a real number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    row,
                    column: header[j].clone(),
                    message: format!("'{cell}' is not finite"),
                });
            }
            values.push(v);
        }
        if let Some(li) = label_idx {
            labels.push(record[li].to_string());
        }
        n += 1;
    }
    let features = DMatrix::from_row_iterator(n, feature_cols.len(), values);
    Ok(CsvTable {
        feature_names,
        features,
        labels: label_idx.map(|_| labels),
    })
}

/// Writes features then the label column. Reals use the shortest decimal form
/// that parses back to the identical bits.
pub fn save_csv(ds: &LabeledDataset, path: impl AsRef<Path>, label_column: &str) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = ds.feature_names.iter().map(String::as_str).collect();
    header.push(label_column);
    w.write_record(&header)?;
    for i in 0..ds.n() {
        let mut rec: Vec<String> = ds.features.row(i).iter().map(|v| format!("{v:e}")).collect();
        rec.push(ds.labels[i].clone());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Deterministic split. The stratified variant takes `round(f * n_k)` test rows
/// from every class.
pub fn train_test_split(
    ds: &LabeledDataset,
    test_fraction: f64,
    seed: u64,
    stratified: bool,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::range("test_fraction", test_fraction, "(0, 1)"));
    }
    let mut test_idx = Vec::new();
    if stratified {
        for c in 0..ds.num_classes() {
            let mut rows = ds.rows_of_class(c);
            rows.shuffle(&mut stream_rng(seed, c as u64));
            let k = (test_fraction * rows.len() as f64).round() as usize;
            test_idx.extend_from_slice(&rows[..k]);
        }
    } else {
        let mut rows: Vec<usize> = (0..ds.n()).collect();
        rows.shuffle(&mut stream_rng(seed, u64::MAX));
        let k = (test_fraction * rows.len() as f64).round() as usize;
        test_idx.extend_from_slice(&rows[..k]);
    }
    test_idx.sort_unstable();
    let in_test: HashSet<usize> = test_idx.iter().copied().collect();
    let train_idx: Vec<usize> = (0..ds.n()).filter(|i| !in_test.contains(i)).collect();

    for (side, idx) in [("train", &train_idx), ("test", &test_idx)] {
        let present: HashSet<usize> = idx.iter().map(|&i| ds.class_of[i]).collect();
        if let Some(missing) = (0..ds.num_classes()).find(|c| !present.contains(c)) {
            return Err(Error::Split(format!(
                "class '{}' has no rows in the {side} part",
                ds.classes[missing]
            )));
        }
    }
    if train_idx.len() < 2 || test_idx.is_empty() {
        return Err(Error::Split("split leaves too few rows".into()));
    }
    Ok((ds.subset(&train_idx)?, ds.subset(&test_idx)?))
}
