//! Weighted binary classifiers behind a single [`Predictor`] interface, plus
//! the brute-force neighbor search used by the consistency metric.

mod boosting;
mod forest;
mod knn;
mod logistic;
mod tree;

pub use boosting::{BoostingModel, BoostingParams};
pub use forest::{ForestModel, ForestParams, ForestWeighting};
pub use knn::KnnIndex;
pub use logistic::{LogisticModel, LogisticParams};
pub use tree::{Node, Tree, TreeParams};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Format version written into serialized models.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Decision threshold on the favorable-class probability.
pub const THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training target contains a single class")]
    SingleClass,
    #[error("non-finite feature value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },
    #[error("sample weights must be positive and finite (row {0})")]
    BadWeight(usize),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("expected {expected} features, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("k = {k} exceeds the {available} available reference points")]
    TooFewNeighbors { k: usize, available: usize },
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error("model JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Anything producing a scalar output per feature vector.
///
/// Classifiers return the probability of the favorable class; explainers only
/// require a real-valued function.
pub trait Predictor: Sync {
    fn feature_count(&self) -> usize;

    fn predict_row(&self, x: &[f64]) -> f64;
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn feature_count(&self) -> usize {
        (**self).feature_count()
    }

    fn predict_row(&self, x: &[f64]) -> f64 {
        (**self).predict_row(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    LogisticRegression,
    RandomForest,
    GradientBoosting,
}

impl ClassifierKind {
    pub fn default_spec(self, seed: u64) -> ClassifierSpec {
        let classifier = match self {
            Self::LogisticRegression => Classifier::LogisticRegression(LogisticParams::default()),
            Self::RandomForest => Classifier::RandomForest(ForestParams::default()),
            Self::GradientBoosting => Classifier::GradientBoosting(BoostingParams::default()),
        };
        ClassifierSpec { classifier, seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "hyperparameters", rename_all = "snake_case")]
pub enum Classifier {
    LogisticRegression(LogisticParams),
    RandomForest(ForestParams),
    GradientBoosting(BoostingParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    #[serde(flatten)]
    pub classifier: Classifier,
    pub seed: u64,
}

impl ClassifierSpec {
    pub fn kind(&self) -> ClassifierKind {
        match self.classifier {
            Classifier::LogisticRegression(_) => ClassifierKind::LogisticRegression,
            Classifier::RandomForest(_) => ClassifierKind::RandomForest,
            Classifier::GradientBoosting(_) => ClassifierKind::GradientBoosting,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match &self.classifier {
            Classifier::LogisticRegression(p) => p.validate(),
            Classifier::RandomForest(p) => p.validate(),
            Classifier::GradientBoosting(p) => p.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    LogisticRegression(LogisticModel),
    RandomForest(ForestModel),
    GradientBoosting(BoostingModel),
}

/// A fitted classifier. Immutable after training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: ClassifierSpec,
    pub feature_count: usize,
    pub params: ModelParams,
}

#[derive(Serialize, Deserialize)]
struct ModelDocument<M> {
    format_version: u32,
    model: M,
}

impl TrainedModel {
    pub fn predict_proba(&self, x: &[Vec<f64>]) -> Result<Vec<f64>, ModelError> {
        self.check_width(x)?;
        Ok(x.iter().map(|row| self.predict_row(row)).collect())
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<u8>, ModelError> {
        Ok(self
            .predict_proba(x)?
            .into_iter()
            .map(|p| u8::from(p >= THRESHOLD))
            .collect())
    }

    fn check_width(&self, x: &[Vec<f64>]) -> Result<(), ModelError> {
        match x.iter().find(|r| r.len() != self.feature_count) {
            Some(r) => Err(ModelError::DimensionMismatch {
                expected: self.feature_count,
                found: r.len(),
            }),
            None => Ok(()),
        }
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        Ok(serde_json::to_string_pretty(&ModelDocument {
            format_version: MODEL_FORMAT_VERSION,
            model: self,
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let doc: ModelDocument<TrainedModel> = serde_json::from_str(text)?;
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(ModelError::UnsupportedVersion(doc.format_version));
        }
        Ok(doc.model)
    }
}

impl Predictor for TrainedModel {
    fn feature_count(&self) -> usize {
        self.feature_count
    }

    fn predict_row(&self, x: &[f64]) -> f64 {
        match &self.params {
            ModelParams::LogisticRegression(m) => m.probability(x),
            ModelParams::RandomForest(m) => m.probability(x),
            ModelParams::GradientBoosting(m) => m.probability(x),
        }
    }
}

/// Fits the classifier described by `spec` on weighted rows.
pub fn train(
    spec: &ClassifierSpec,
    x: &[Vec<f64>],
    y: &[u8],
    weights: &[f64],
) -> Result<TrainedModel, ModelError> {
    spec.validate()?;
    let feature_count = check_training_data(x, y, weights)?;
    let params = match &spec.classifier {
        Classifier::LogisticRegression(p) => {
            ModelParams::LogisticRegression(logistic::fit(p, x, y, weights))
        }
        Classifier::RandomForest(p) => {
            ModelParams::RandomForest(forest::fit(p, x, y, weights, spec.seed))
        }
        Classifier::GradientBoosting(p) => {
            ModelParams::GradientBoosting(boosting::fit(p, x, y, weights))
        }
    };
    Ok(TrainedModel {
        spec: spec.clone(),
        feature_count,
        params,
    })
}

fn check_training_data(x: &[Vec<f64>], y: &[u8], weights: &[f64]) -> Result<usize, ModelError> {
    if x.len() != y.len() || y.len() != weights.len() {
        return Err(ModelError::LengthMismatch(format!(
            "{} rows, {} labels, {} weights",
            x.len(),
            y.len(),
            weights.len()
        )));
    }
    let width = x.first().map_or(0, Vec::len);
    for (row, r) in x.iter().enumerate() {
        if r.len() != width {
            return Err(ModelError::DimensionMismatch {
                expected: width,
                found: r.len(),
            });
        }
        if let Some(column) = r.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite { row, column });
        }
    }
    if let Some(i) = weights.iter().position(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(ModelError::BadWeight(i));
    }
    let positives = y.iter().filter(|&&v| v == 1).count();
    if positives == 0 || positives == y.len() {
        return Err(ModelError::SingleClass);
    }
    Ok(width)
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
