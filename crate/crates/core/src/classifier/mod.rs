//! Random forest over feature vectors: bagged Gini trees with per-node
//! feature subsampling and majority voting.

mod io;
mod tree;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::splitmix64;
use crate::features::{FeatureVector, Label, FEATURE_NAMES};

pub use io::{feature_schema_hash, load_model, save_model, MODEL_VERSION};
pub use tree::{Node, Tree};

pub const N_FEATURES: usize = 18;
pub(crate) const N_CLASSES: usize = 2;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("no training data")]
    EmptyData,
    #[error("training data holds a single class ({0})")]
    SingleClassData(Label),
    #[error("training example {0} has a non-finite feature")]
    NonFinite(usize),
    #[error("training example {0} is unlabeled")]
    Unlabeled(usize),
    #[error("invalid forest parameters: {0}")]
    InvalidParams(String),
    #[error("model schema mismatch: {0}")]
    SchemaVersionMismatch(String),
    #[error("corrupt model file: {0}")]
    CorruptFile(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Forest hyperparameters as they appear in the run configuration. The seed
/// lives at the top level of the configuration and is attached with
/// [`ForestSettings::with_seed`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestSettings {
    pub n_trees: usize,
    pub n_split_features: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
}

impl Default for ForestSettings {
    fn default() -> Self {
        Self {
            n_trees: 10,
            n_split_features: 5,
            max_depth: None,
            min_leaf: 1,
        }
    }
}

impl ForestSettings {
    pub fn with_seed(self, seed: u64) -> ForestParams {
        ForestParams {
            n_trees: self.n_trees,
            n_split_features: self.n_split_features,
            max_depth: self.max_depth,
            min_leaf: self.min_leaf,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub n_split_features: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestSettings::default().with_seed(0)
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if self.n_trees == 0 {
            return Err(ClassifierError::InvalidParams("n_trees must be >= 1".into()));
        }
        if !(1..=N_FEATURES).contains(&self.n_split_features) {
            return Err(ClassifierError::InvalidParams(format!(
                "n_split_features must be in 1..={N_FEATURES}, got {}",
                self.n_split_features
            )));
        }
        if self.min_leaf == 0 {
            return Err(ClassifierError::InvalidParams("min_leaf must be >= 1".into()));
        }
        Ok(())
    }

    fn grow_params(&self) -> tree::GrowParams {
        tree::GrowParams {
            n_split_features: self.n_split_features,
            max_depth: self.max_depth,
            min_leaf: self.min_leaf,
        }
    }

    /// Seed of tree `t`; independent of how trees are scheduled.
    fn tree_seed(&self, t: usize) -> u64 {
        splitmix64(self.seed.wrapping_add(t as u64))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: Label,
    /// Fraction of trees voting minke.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub params: ForestParams,
    pub feature_order: Vec<String>,
    /// SHA-256 over the training matrix, labels and parameters.
    pub training_fingerprint: String,
    /// Out-of-bag accuracy, when at least one example was left out of some tree.
    pub oob_accuracy: Option<f64>,
}

fn class_index(label: Label) -> u8 {
    u8::from(label == Label::Minke)
}

fn fingerprint(x: &[[f64; N_FEATURES]], y: &[u8], params: &ForestParams) -> String {
    let mut h = Sha256::new();
    for (row, &c) in x.iter().zip(y) {
        for v in row {
            h.update(v.to_le_bytes());
        }
        h.update([c]);
    }
    h.update(serde_json::to_vec(params).expect("params serialize"));
    hex::encode(h.finalize())
}

/// Trains a forest on labeled vectors. Every example must be finite and
/// labeled minke or non-minke, and both classes must be present.
pub fn train_forest(data: &[FeatureVector], params: &ForestParams) -> Result<ForestModel, ClassifierError> {
    params.validate()?;
    if data.is_empty() {
        return Err(ClassifierError::EmptyData);
    }
    let mut x = Vec::with_capacity(data.len());
    let mut y = Vec::with_capacity(data.len());
    for (i, fv) in data.iter().enumerate() {
        if !fv.is_finite() {
            return Err(ClassifierError::NonFinite(i));
        }
        if fv.label == Label::Unlabeled {
            return Err(ClassifierError::Unlabeled(i));
        }
        x.push(fv.to_array());
        y.push(class_index(fv.label));
    }
    if y.iter().all(|&c| c == y[0]) {
        return Err(ClassifierError::SingleClassData(data[0].label));
    }

    let n = x.len();
    let grow = params.grow_params();
    let grown: Vec<(Tree, Vec<bool>)> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.tree_seed(t));
            let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let mut in_bag = vec![false; n];
            for &i in &sample {
                in_bag[i] = true;
            }
            (tree::grow(&x, &y, sample, &grow, &mut rng), in_bag)
        })
        .collect();

    let mut oob_votes = vec![[0u32; N_CLASSES]; n];
    for (tree, in_bag) in &grown {
        for i in (0..n).filter(|&i| !in_bag[i]) {
            oob_votes[i][tree.vote(&x[i]) as usize] += 1;
        }
    }
    let (mut seen, mut correct) = (0usize, 0usize);
    for (votes, &c) in oob_votes.iter().zip(&y) {
        if votes[0] + votes[1] > 0 {
            seen += 1;
            correct += usize::from(u8::from(votes[1] > votes[0]) == c);
        }
    }

    Ok(ForestModel {
        trees: grown.into_iter().map(|(t, _)| t).collect(),
        params: *params,
        feature_order: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        training_fingerprint: fingerprint(&x, &y, params),
        oob_accuracy: (seen > 0).then(|| correct as f64 / seen as f64),
    })
}

impl ForestModel {
    /// Fraction of trees voting minke for a raw feature row.
    pub fn score_array(&self, x: &[f64; N_FEATURES]) -> f64 {
        let votes: usize = self.trees.iter().map(|t| t.vote(x) as usize).sum();
        votes as f64 / self.trees.len() as f64
    }

    pub fn predict_with_threshold(&self, fv: &FeatureVector, threshold: f64) -> Prediction {
        let score = self.score_array(&fv.to_array());
        let label = if score >= threshold { Label::Minke } else { Label::NonMinke };
        Prediction { label, score }
    }

    pub fn predict(&self, fv: &FeatureVector) -> Prediction {
        self.predict_with_threshold(fv, 0.5)
    }

    /// Checks the structural invariants of every tree.
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if self.trees.is_empty() {
            return Err(ClassifierError::CorruptFile("model has no trees".into()));
        }
        for (t, tree) in self.trees.iter().enumerate() {
            tree.validate()
                .map_err(|e| ClassifierError::CorruptFile(format!("tree {t}: {e}")))?;
        }
        Ok(())
    }
}
