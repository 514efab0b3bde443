use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::dataset::LabeledDataset;
use super::model::{predict, ModelKind, TrainedModel};
use crate::error::{Error, Result};
use crate::signal_io::SeverityLabel;

/// Wall-clock seconds per stage. Kept out of reports by default so that
/// repeated runs serialize identically.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub extract_seconds: f64,
    pub train_seconds: f64,
    pub predict_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: ModelKind,
    pub feature_set: String,
    pub labels: Vec<SeverityLabel>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    /// `None` when the test partition is empty.
    pub accuracy: Option<f64>,
    /// `None` for classes absent from the test partition.
    pub per_class_recall: Vec<Option<f64>>,
    pub train_size: usize,
    pub test_size: usize,
    pub train_class_counts: Vec<usize>,
    pub split_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
}

/// `k × k` counts indexed `[true][predicted]`.
pub fn confusion_matrix(truth: &[usize], predicted: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0usize; k]; k];
    for (&t, &p) in truth.iter().zip(predicted) {
        m[t][p] += 1;
    }
    m
}

pub fn evaluate(model: &TrainedModel, test: &LabeledDataset) -> Result<EvalReport> {
    if model.label_set != test.label_set {
        return Err(Error::Argument("test labels differ from the model's label set".into()));
    }
    let k = model.label_set.len();
    let pred = if test.is_empty() {
        Vec::new()
    } else {
        predict(model, &test.rows)?
    };
    let confusion = confusion_matrix(&test.labels, &pred, k);
    let correct: usize = (0..k).map(|c| confusion[c][c]).sum();
    let accuracy = (!test.is_empty()).then(|| correct as f64 / test.len() as f64);
    let per_class_recall = confusion
        .iter()
        .enumerate()
        .map(|(c, row)| {
            let n: usize = row.iter().sum();
            (n > 0).then(|| row[c] as f64 / n as f64)
        })
        .collect();
    Ok(EvalReport {
        model: model.kind,
        feature_set: test.feature_set.clone(),
        labels: model.label_set.clone(),
        confusion,
        accuracy,
        per_class_recall,
        train_size: model.n_train(),
        test_size: test.len(),
        train_class_counts: model.train_class_counts.clone(),
        split_seed: test.split_seed,
        timings: None,
    })
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    /// Human-readable summary with an aligned confusion matrix.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "model: {}  features: {}", self.model, self.feature_set);
        let _ = writeln!(out, "train: {}  test: {}", self.train_size, self.test_size);
        match self.accuracy {
            Some(a) => {
                let _ = writeln!(out, "accuracy: {a:.4}");
            }
            None => {
                let _ = writeln!(out, "accuracy: n/a (empty test set)");
            }
        }
        let names: Vec<String> = self.labels.iter().map(|l| l.to_string()).collect();
        let width = names
            .iter()
            .map(String::len)
            .chain(self.confusion.iter().flatten().map(|v| v.to_string().len()))
            .chain(["true\\pred".len()])
            .max()
            .unwrap_or(1);
        let _ = write!(out, "{:>width$}", "true\\pred");
        for n in &names {
            let _ = write!(out, " {n:>width$}");
        }
        let _ = writeln!(out, " {:>8}", "recall");
        for (i, row) in self.confusion.iter().enumerate() {
            let _ = write!(out, "{:>width$}", names[i]);
            for v in row {
                let _ = write!(out, " {v:>width$}");
            }
            match self.per_class_recall[i] {
                Some(r) => {
                    let _ = writeln!(out, " {r:>8.4}");
                }
                None => {
                    let _ = writeln!(out, " {:>8}", "n/a");
                }
            }
        }
        if let Some(t) = &self.timings {
            let _ = writeln!(
                out,
                "time: extract {:.3}s  train {:.3}s  predict {:.3}s",
                t.extract_seconds, t.train_seconds, t.predict_seconds
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::train_tree;

    fn ds(rows: Vec<Vec<f64>>, labels: Vec<usize>) -> LabeledDataset {
        let set = ["mild", "severe"]
            .iter()
            .map(|n| SeverityLabel::new(*n).unwrap())
            .collect();
        LabeledDataset::new("FESF", rows, labels, set).unwrap()
    }

    #[test]
    fn confusion_and_recall() {
        let train = ds(vec![vec![0.0], vec![1.0], vec![10.0], vec![11.0]], vec![0, 0, 1, 1]);
        let m = train_tree(&train, 0).unwrap();
        let test = ds(vec![vec![0.5], vec![10.5], vec![9.0], vec![2.0]], vec![0, 1, 0, 1]);
        let r = evaluate(&m, &test).unwrap();
        assert_eq!(r.confusion, vec![vec![1, 1], vec![1, 1]]);
        assert_eq!(r.accuracy, Some(0.5));
        assert_eq!(r.per_class_recall, vec![Some(0.5), Some(0.5)]);
        let text = r.render_text();
        assert!(text.contains("severe"));
        assert!(!r.to_json().contains("timings"));
    }

    #[test]
    fn three_class_hand_tally() {
        let truth = [0, 0, 0, 1, 1, 2, 2, 2, 2];
        let pred = [0, 1, 0, 1, 2, 2, 0, 2, 2];
        let m = confusion_matrix(&truth, &pred, 3);
        assert_eq!(m, vec![vec![2, 1, 0], vec![0, 1, 1], vec![1, 0, 3]]);
        let sums: Vec<usize> = m.iter().map(|r| r.iter().sum()).collect();
        assert_eq!(sums, vec![3, 2, 4]);
    }

    #[test]
    fn empty_test_has_no_accuracy() {
        let train = ds(vec![vec![0.0], vec![1.0]], vec![0, 1]);
        let m = train_tree(&train, 0).unwrap();
        let r = evaluate(&m, &train.subset(&[])).unwrap();
        assert_eq!(r.accuracy, None);
        assert_eq!(r.per_class_recall, vec![None, None]);
    }
}
