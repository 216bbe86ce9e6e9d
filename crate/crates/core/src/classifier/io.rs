//! JSON model file.
//!
//! ```text
//! { "version": 1,
//!   "params": { "n_trees", "n_split_features", "max_depth"?, "min_leaf", "seed" },
//!   "feature_order": ["f1", ..., "f18"],
//!   "feature_schema": sha256 of the comma-joined feature_order,
//!   "training_fingerprint": hex,
//!   "oob_accuracy": number | null,
//!   "trees": [ { "nodes": [ {"kind": "split", "feature", "threshold", "left", "right"}
//!                         | {"kind": "leaf", "counts": [non_minke, minke]} ] } ] }
//! ```
//!
//! Node 0 is the root and children always follow their parent.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ClassifierError, ForestModel, ForestParams, Tree};
use crate::features::FEATURE_NAMES;

pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    version: u32,
    params: ForestParams,
    feature_order: Vec<String>,
    feature_schema: String,
    training_fingerprint: String,
    oob_accuracy: Option<f64>,
    trees: Vec<Tree>,
}

/// Hash of a feature order, stored alongside it so edits to either are caught.
pub fn feature_schema_hash<S: AsRef<str>>(names: &[S]) -> String {
    let joined: Vec<&str> = names.iter().map(|s| s.as_ref()).collect();
    hex::encode(Sha256::digest(joined.join(",").as_bytes()))
}

pub fn save_model(model: &ForestModel, path: impl AsRef<Path>) -> Result<(), ClassifierError> {
    let path = path.as_ref();
    let file = ModelFile {
        version: MODEL_VERSION,
        params: model.params,
        feature_order: model.feature_order.clone(),
        feature_schema: feature_schema_hash(&model.feature_order),
        training_fingerprint: model.training_fingerprint.clone(),
        oob_accuracy: model.oob_accuracy,
        trees: model.trees.clone(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("model serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|source| ClassifierError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ForestModel, ClassifierError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ClassifierError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_model(&text)
}

fn parse_model(text: &str) -> Result<ForestModel, ClassifierError> {
    // Check the version before the full schema so old files get a clear error.
    let raw: serde_json::Value =
        serde_json::from_str(text).map_err(|e| ClassifierError::CorruptFile(e.to_string()))?;
    match raw.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == MODEL_VERSION as u64 => {}
        Some(v) => {
            return Err(ClassifierError::SchemaVersionMismatch(format!(
                "file version {v}, expected {MODEL_VERSION}"
            )))
        }
        None => return Err(ClassifierError::CorruptFile("missing version".into())),
    }
    let file: ModelFile =
        serde_json::from_value(raw).map_err(|e| ClassifierError::CorruptFile(e.to_string()))?;

    if file.feature_schema != feature_schema_hash(&file.feature_order) {
        return Err(ClassifierError::SchemaVersionMismatch(
            "feature_schema does not match feature_order".into(),
        ));
    }
    if file.feature_order.iter().map(String::as_str).ne(FEATURE_NAMES) {
        return Err(ClassifierError::SchemaVersionMismatch(format!(
            "feature order {:?} differs from the current feature set",
            file.feature_order
        )));
    }
    file.params
        .validate()
        .map_err(|e| ClassifierError::CorruptFile(e.to_string()))?;
    let model = ForestModel {
        trees: file.trees,
        params: file.params,
        feature_order: file.feature_order,
        training_fingerprint: file.training_fingerprint,
        oob_accuracy: file.oob_accuracy,
    };
    model.validate()?;
    Ok(model)
}
