use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal_io::SeverityLabel;

/// Feature rows with class labels stored as indices into `label_set`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub feature_set: String,
    pub source_ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub label_set: Vec<SeverityLabel>,
    pub split_seed: Option<u64>,
}

impl LabeledDataset {
    /// Builds a dataset, checking that every row has the same width and
    /// every label indexes `label_set`.
    pub fn new(
        feature_set: impl Into<String>,
        rows: Vec<Vec<f64>>,
        labels: Vec<usize>,
        label_set: Vec<SeverityLabel>,
    ) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::Dimension {
                expected: rows.len(),
                got: labels.len(),
            });
        }
        if let Some(first) = rows.first() {
            if let Some(bad) = rows.iter().find(|r| r.len() != first.len()) {
                return Err(Error::Dimension {
                    expected: first.len(),
                    got: bad.len(),
                });
            }
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= label_set.len()) {
            return Err(Error::Argument(format!("label index {l} outside label set")));
        }
        let source_ids = (0..rows.len()).map(|i| format!("row{i}")).collect();
        Ok(Self {
            feature_set: feature_set.into(),
            source_ids,
            rows,
            labels,
            label_set,
            split_seed: None,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn n_classes(&self) -> usize {
        self.label_set.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.label_set.len()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows at `indices`, in that order; label set is kept.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            feature_set: self.feature_set.clone(),
            source_ids: indices.iter().map(|&i| self.source_ids[i].clone()).collect(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            label_set: self.label_set.clone(),
            split_seed: self.split_seed,
        }
    }

    pub fn with_rows(&self, rows: Vec<Vec<f64>>) -> Self {
        debug_assert_eq!(rows.len(), self.rows.len());
        Self { rows, ..self.clone() }
    }
}

/// Per-class proportional split. Each class sends `⌊n_c·(1 − train_frac)⌋`
/// shuffled rows to the test side; the remainder trains. Both halves keep
/// the original row order.
pub fn stratified_split(ds: &LabeledDataset, train_frac: f64, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(train_frac > 0.0 && train_frac <= 1.0) {
        return Err(Error::Argument(format!("train fraction {train_frac} outside (0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in 0..ds.n_classes() {
        let mut members: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == class).collect();
        match members.len() {
            0 => continue,
            1 => {
                return Err(Error::Stratification(format!(
                    "class `{}` has a single sample",
                    ds.label_set[class]
                )))
            }
            _ => {}
        }
        members.shuffle(&mut rng);
        let n_test = (members.len() as f64 * (1.0 - train_frac) + 1e-9).floor() as usize;
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    let mut tr = ds.subset(&train);
    let mut te = ds.subset(&test);
    tr.split_seed = Some(seed);
    te.split_seed = Some(seed);
    Ok((tr, te))
}
