use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::LabeledDataset;
use super::tree::{majority, DecisionTree, TreeParams};
use crate::error::{Error, Result};
use crate::signal_io::SeverityLabel;

/// Tag written into every saved model.
pub const MODEL_FORMAT: &str = "whfemd-model";
pub const MODEL_VERSION: u32 = 1;

/// Smallest per-feature variance used by Gaussian naive Bayes.
const NB_VARIANCE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Tree,
    Forest,
    Bagging,
    GaussianNb,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Tree => "tree",
            ModelKind::Forest => "forest",
            ModelKind::Bagging => "bagging",
            ModelKind::GaussianNb => "nb",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tree" => Ok(ModelKind::Tree),
            "forest" | "rf" => Ok(ModelKind::Forest),
            "bagging" | "bg" => Ok(ModelKind::Bagging),
            "nb" | "gaussian_nb" => Ok(ModelKind::GaussianNb),
            other => Err(Error::Argument(format!("unknown model kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub kind: ModelKind,
    /// Trees in a forest or bagging ensemble.
    pub n_estimators: usize,
    /// Features tried per forest split; `None` means `⌊√d⌋`.
    pub max_features: Option<usize>,
    pub seed: u64,
}

impl TrainParams {
    pub fn new(kind: ModelKind, seed: u64) -> Self {
        Self {
            kind,
            n_estimators: 100,
            max_features: None,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GaussianNb {
    log_priors: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
}

impl GaussianNb {
    fn predict_one(&self, x: &[f64]) -> usize {
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for c in 0..self.log_priors.len() {
            if self.log_priors[c] == f64::NEG_INFINITY {
                continue;
            }
            let ll: f64 = x
                .iter()
                .zip(self.means[c].iter().zip(&self.variances[c]))
                .map(|(&v, (&m, &var))| -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (v - m) * (v - m) / var))
                .sum();
            let score = self.log_priors[c] + ll;
            if score > best_score {
                best_score = score;
                best = c;
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum ModelBody {
    /// Always predicts one class.
    Prior {
        class: usize,
    },
    Tree {
        tree: DecisionTree,
    },
    Ensemble {
        trees: Vec<DecisionTree>,
    },
    GaussianNb {
        nb: GaussianNb,
    },
}

/// A fitted classifier. Serializes to a self-describing JSON document
/// tagged with [`MODEL_FORMAT`] and [`MODEL_VERSION`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format: String,
    pub version: u32,
    pub kind: ModelKind,
    pub label_set: Vec<SeverityLabel>,
    pub n_features: usize,
    pub train_class_counts: Vec<usize>,
    /// Rows were identical but labels differed, so only the class prior was learned.
    pub degenerate: bool,
    pub params: TrainParams,
    body: ModelBody,
}

impl TrainedModel {
    pub fn n_train(&self) -> usize {
        self.train_class_counts.iter().sum()
    }

    pub fn is_prior_only(&self) -> bool {
        matches!(self.body, ModelBody::Prior { .. })
    }

    pub fn predict_one(&self, x: &[f64]) -> usize {
        match &self.body {
            ModelBody::Prior { class } => *class,
            ModelBody::Tree { tree } => tree.predict_one(x),
            ModelBody::Ensemble { trees } => {
                let mut votes = vec![0; self.label_set.len()];
                for t in trees {
                    votes[t.predict_one(x)] += 1;
                }
                majority(&votes)
            }
            ModelBody::GaussianNb { nb } => nb.predict_one(x),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: TrainedModel = serde_json::from_str(text).map_err(|e| Error::Model(e.to_string()))?;
        if m.format != MODEL_FORMAT {
            return Err(Error::Model(format!("not a model file (format `{}`)", m.format)));
        }
        if m.version != MODEL_VERSION {
            return Err(Error::Model(format!("unsupported model version {}", m.version)));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

pub fn predict(model: &TrainedModel, rows: &[Vec<f64>]) -> Result<Vec<usize>> {
    if let Some(bad) = rows.iter().find(|r| r.len() != model.n_features) {
        return Err(Error::Dimension {
            expected: model.n_features,
            got: bad.len(),
        });
    }
    Ok(rows.iter().map(|r| model.predict_one(r)).collect())
}

/// Seeds member `index` of an ensemble independently of scheduling order.
fn member_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

fn bootstrap(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

pub fn train(ds: &LabeledDataset, params: &TrainParams) -> Result<TrainedModel> {
    if ds.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if ds.n_classes() == 0 {
        return Err(Error::Argument("dataset has an empty label set".into()));
    }
    let counts = ds.class_counts();
    let present = counts.iter().filter(|&&c| c > 0).count();
    let first = &ds.rows[0];
    let identical = ds.rows.iter().all(|r| r == first);

    let body = if present == 1 || identical {
        ModelBody::Prior {
            class: majority(&counts),
        }
    } else {
        let all: Vec<usize> = (0..ds.len()).collect();
        match params.kind {
            ModelKind::Tree => {
                let mut rng = member_rng(params.seed, 0);
                ModelBody::Tree {
                    tree: DecisionTree::fit(
                        &ds.rows,
                        &ds.labels,
                        &all,
                        ds.n_classes(),
                        &TreeParams::default(),
                        &mut rng,
                    ),
                }
            }
            ModelKind::Forest => {
                let d = ds.dim();
                let k = params
                    .max_features
                    .unwrap_or_else(|| ((d as f64).sqrt().floor() as usize).max(1));
                let tp = TreeParams {
                    max_features: Some(k),
                    ..TreeParams::default()
                };
                let trees = (0..params.n_estimators.max(1))
                    .into_par_iter()
                    .map(|m| {
                        let mut rng = member_rng(params.seed, m);
                        let sample = bootstrap(ds.len(), &mut rng);
                        DecisionTree::fit(&ds.rows, &ds.labels, &sample, ds.n_classes(), &tp, &mut rng)
                    })
                    .collect();
                ModelBody::Ensemble { trees }
            }
            ModelKind::Bagging => {
                let tp = TreeParams::default();
                let trees = (0..params.n_estimators.max(1))
                    .into_par_iter()
                    .map(|m| {
                        let mut rng = member_rng(params.seed, m);
                        let sample = bootstrap(ds.len(), &mut rng);
                        let mut in_bag = vec![false; ds.len()];
                        for &i in &sample {
                            in_bag[i] = true;
                        }
                        let oob: Vec<usize> = (0..ds.len()).filter(|&i| !in_bag[i]).collect();
                        let mut tree = DecisionTree::fit(&ds.rows, &ds.labels, &sample, ds.n_classes(), &tp, &mut rng);
                        if !oob.is_empty() {
                            tree.prune_reduced_error(&ds.rows, &ds.labels, &oob);
                        }
                        tree
                    })
                    .collect();
                ModelBody::Ensemble { trees }
            }
            ModelKind::GaussianNb => ModelBody::GaussianNb {
                nb: fit_nb(ds, &counts),
            },
        }
    };

    Ok(TrainedModel {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        kind: params.kind,
        label_set: ds.label_set.clone(),
        n_features: ds.dim(),
        train_class_counts: counts,
        degenerate: identical && present > 1,
        params: params.clone(),
        body,
    })
}

fn fit_nb(ds: &LabeledDataset, counts: &[usize]) -> GaussianNb {
    let d = ds.dim();
    let n = ds.len() as f64;
    let k = ds.n_classes();
    let mut means = vec![vec![0.0; d]; k];
    let mut variances = vec![vec![0.0; d]; k];
    for (row, &l) in ds.rows.iter().zip(&ds.labels) {
        for (m, v) in means[l].iter_mut().zip(row) {
            *m += v;
        }
    }
    for (c, m) in means.iter_mut().enumerate() {
        if counts[c] > 0 {
            m.iter_mut().for_each(|v| *v /= counts[c] as f64);
        }
    }
    for (row, &l) in ds.rows.iter().zip(&ds.labels) {
        for ((var, v), m) in variances[l].iter_mut().zip(row).zip(&means[l]) {
            *var += (v - m) * (v - m);
        }
    }
    for (c, var) in variances.iter_mut().enumerate() {
        let denom = counts[c].max(1) as f64;
        var.iter_mut().for_each(|v| *v = (*v / denom).max(NB_VARIANCE_FLOOR));
    }
    GaussianNb {
        log_priors: counts
            .iter()
            .map(|&c| if c == 0 { f64::NEG_INFINITY } else { (c as f64 / n).ln() })
            .collect(),
        means,
        variances,
    }
}

pub fn train_tree(ds: &LabeledDataset, seed: u64) -> Result<TrainedModel> {
    train(ds, &TrainParams::new(ModelKind::Tree, seed))
}

pub fn train_forest(
    ds: &LabeledDataset,
    n_trees: usize,
    max_features: Option<usize>,
    seed: u64,
) -> Result<TrainedModel> {
    train(
        ds,
        &TrainParams {
            kind: ModelKind::Forest,
            n_estimators: n_trees,
            max_features,
            seed,
        },
    )
}

pub fn train_bagging(ds: &LabeledDataset, n_estimators: usize, seed: u64) -> Result<TrainedModel> {
    train(
        ds,
        &TrainParams {
            kind: ModelKind::Bagging,
            n_estimators,
            max_features: None,
            seed,
        },
    )
}

pub fn train_gaussian_nb(ds: &LabeledDataset, seed: u64) -> Result<TrainedModel> {
    train(ds, &TrainParams::new(ModelKind::GaussianNb, seed))
}
