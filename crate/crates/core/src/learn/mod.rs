//! Classification, imbalance handling and evaluation over extracted feature sets.

mod balance;
mod dataset;
mod eval;
mod model;
mod tree;

pub use balance::{pca_fit, pca_fit_transform, smote, PcaBasis, SmoteOutcome};
pub use dataset::{stratified_split, LabeledDataset};
pub use eval::{confusion_matrix, evaluate, EvalReport, Timings};
pub use model::{
    predict, train, train_bagging, train_forest, train_gaussian_nb, train_tree, ModelKind, TrainParams, TrainedModel,
    MODEL_FORMAT, MODEL_VERSION,
};
pub use tree::{DecisionTree, TreeParams};
