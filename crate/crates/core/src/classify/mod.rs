//! Random-forest behaviour classifier.
//!
//! Trees are CART trees grown on bootstrap resamples, choosing at every node
//! the (feature, threshold) pair with the lowest weighted Gini impurity among
//! `features_per_split` randomly drawn features. Thresholds are midpoints
//! between consecutive distinct values. Forest probabilities are the mean of
//! the per-tree leaf class frequencies.

mod forest;

pub use forest::{
    feature_importance, gini, predict, train_forest, ClassWeight, ForestParams, Prediction, RandomForestModel, TreeNode,
};

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureDataset;
use crate::ingest::Behavior;

/// Current model file version.
pub const MODEL_FORMAT_VERSION: u32 = 1;
const MODEL_FORMAT_NAME: &str = "herdpipe-forest";

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("cannot train on an empty dataset")]
    EmptyDataset,
    #[error("feature schema mismatch: model expects {expected} features, got {found}")]
    SchemaMismatch { expected: usize, found: usize },
    #[error("model file version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u64, expected: u32 },
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    model: RandomForestModel,
}

/// Serialises the model as versioned JSON.
pub fn model_to_json(model: &RandomForestModel) -> String {
    let file = ModelFile {
        format: MODEL_FORMAT_NAME.to_string(),
        version: MODEL_FORMAT_VERSION,
        model: model.clone(),
    };
    serde_json::to_string(&file).expect("model serialises")
}

pub fn model_from_json(text: &str) -> Result<RandomForestModel, ForestError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ForestError::CorruptModel(e.to_string()))?;
    let version = value
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| ForestError::CorruptModel("missing version".into()))?;
    if version != MODEL_FORMAT_VERSION as u64 {
        return Err(ForestError::VersionMismatch {
            found: version,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    let file: ModelFile = serde_json::from_value(value).map_err(|e| ForestError::CorruptModel(e.to_string()))?;
    if file.format != MODEL_FORMAT_NAME {
        return Err(ForestError::CorruptModel(format!(
            "unexpected format {:?}",
            file.format
        )));
    }
    let model = file.model;
    let d = model.schema.len();
    if model.importances.len() != d || model.importances.iter().any(|v| v.is_nan() || *v < 0.0) {
        return Err(ForestError::CorruptModel("importances do not match schema".into()));
    }
    if model.classes != Behavior::ALL {
        return Err(ForestError::CorruptModel("unexpected class list".into()));
    }
    for tree in &model.trees {
        if tree.max_feature().is_some_and(|f| f >= d) || !tree.leaves_valid() {
            return Err(ForestError::CorruptModel(
                "tree references invalid feature or leaf".into(),
            ));
        }
    }
    Ok(model)
}

pub fn save_model(model: &RandomForestModel, path: impl AsRef<Path>) -> Result<(), ForestError> {
    let path = path.as_ref();
    fs::write(path, model_to_json(model)).map_err(|source| ForestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<RandomForestModel, ForestError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ForestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    model_from_json(&text)
}

/// Confusion matrix (`confusion[actual][predicted]`) with derived rates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub confusion: [[u64; 4]; 4],
    pub accuracy: f64,
    pub precision: [f64; 4],
    pub recall: [f64; 4],
}

impl EvalReport {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Behavior, Behavior)>) -> Self {
        let mut confusion = [[0u64; 4]; 4];
        for (actual, predicted) in pairs {
            confusion[actual.index()][predicted.index()] += 1;
        }
        let total: u64 = confusion.iter().flatten().sum();
        let trace: u64 = (0..4).map(|k| confusion[k][k]).sum();
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = std::array::from_fn(|k| ratio(confusion[k][k], (0..4).map(|a| confusion[a][k]).sum()));
        let recall = std::array::from_fn(|k| ratio(confusion[k][k], confusion[k].iter().sum()));
        Self {
            confusion,
            accuracy: ratio(trace, total),
            precision,
            recall,
        }
    }

    pub fn total(&self) -> u64 {
        self.confusion.iter().flatten().sum()
    }

    pub fn support(&self, class: Behavior) -> u64 {
        self.confusion[class.index()].iter().sum()
    }

    /// Plain-text confusion table.
    pub fn table(&self) -> String {
        let mut s = format!("{:>12}", "actual\\pred");
        for b in Behavior::ALL {
            s.push_str(&format!("{:>12}", b.as_str()));
        }
        s.push('\n');
        for a in Behavior::ALL {
            s.push_str(&format!("{:>12}", a.as_str()));
            for p in Behavior::ALL {
                s.push_str(&format!("{:>12}", self.confusion[a.index()][p.index()]));
            }
            s.push('\n');
        }
        s.push_str(&format!("accuracy {:.4}\n", self.accuracy));
        s
    }
}

pub fn evaluate(model: &RandomForestModel, dataset: &FeatureDataset) -> Result<EvalReport, ForestError> {
    let predictions = model.predict_dataset(dataset)?;
    Ok(EvalReport::from_pairs(
        dataset.labels().zip(predictions.iter().map(|p| p.behavior)),
    ))
}

/// Accuracy reference: always predict the most frequent training label.
pub fn majority_baseline(train: &FeatureDataset, test: &FeatureDataset) -> EvalReport {
    let mut counts = [0usize; 4];
    train.labels().for_each(|b| counts[b.index()] += 1);
    let majority = (0..4).fold(0, |best, k| if counts[k] > counts[best] { k } else { best });
    let class = Behavior::ALL[majority];
    EvalReport::from_pairs(test.labels().map(|a| (a, class)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureRow, ParamMode};

    fn toy() -> FeatureDataset {
        FeatureDataset {
            schema: vec!["a".into(), "b".into()],
            mode: ParamMode::Raw6,
            rows: (0..60)
                .map(|i| FeatureRow {
                    start: i,
                    values: vec![i as f64, (i % 7) as f64],
                    label: Behavior::ALL[i / 15],
                })
                .collect(),
        }
    }

    #[test]
    fn save_load_roundtrip() {
        let ds = toy();
        let m = train_forest(
            &ds,
            &ForestParams {
                n_trees: 7,
                min_samples_leaf: 1,
                seed: 3,
                ..Default::default()
            },
        )
        .unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        save_model(&m, f.path()).unwrap();
        let back = load_model(f.path()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn truncated_and_future_files_rejected() {
        let m = train_forest(
            &toy(),
            &ForestParams {
                n_trees: 2,
                ..Default::default()
            },
        )
        .unwrap();
        let json = model_to_json(&m);
        assert!(matches!(
            model_from_json(&json[..json.len() / 2]),
            Err(ForestError::CorruptModel(_))
        ));
        let future = json.replacen("\"version\":1", "\"version\":999", 1);
        assert!(matches!(
            model_from_json(&future),
            Err(ForestError::VersionMismatch { found: 999, .. })
        ));
    }

    #[test]
    fn constant_predictor_on_balanced_set() {
        let r = EvalReport::from_pairs(
            Behavior::ALL
                .iter()
                .flat_map(|&a| std::iter::repeat_n((a, Behavior::Lying), 10)),
        );
        assert_eq!(r.accuracy, 0.25);
        for b in Behavior::ALL {
            assert_eq!(r.support(b), 10);
        }
        assert_eq!(r.recall[Behavior::Lying.index()], 1.0);
        assert_eq!(r.precision[Behavior::Lying.index()], 0.25);
    }

    #[test]
    fn single_class_self_evaluation() {
        let mut ds = toy();
        ds.rows.iter_mut().for_each(|r| r.label = Behavior::Ruminating);
        let m = train_forest(
            &ds,
            &ForestParams {
                n_trees: 3,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(evaluate(&m, &ds).unwrap().accuracy, 1.0);
    }

    #[test]
    fn majority_baseline_picks_dominant_class() {
        let mut ds = toy();
        ds.rows.iter_mut().take(40).for_each(|r| r.label = Behavior::Lying);
        let r = majority_baseline(&ds, &ds);
        assert!((r.accuracy - 45.0 / 60.0).abs() < 1e-12);
    }
}
