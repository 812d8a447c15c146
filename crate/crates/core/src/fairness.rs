//! Group and individual fairness measures over test-split predictions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{KnnIndex, ModelError, TrainedModel};

#[derive(Debug, Error)]
pub enum FairnessError {
    #[error("no rows in the {0} group")]
    EmptyGroup(&'static str),
    #[error("no rows with sensitive={sensitive} and target=1; true-positive rate undefined")]
    EmptyCell { sensitive: u8 },
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("values must be 0 or 1 in {0}")]
    NonBinary(&'static str),
    #[error("k = {k} is invalid for {rows} test rows")]
    InvalidK { k: usize, rows: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Ratio of favorable-prediction rates, unprivileged over privileged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "value", rename_all = "snake_case")]
pub enum DisparateImpact {
    Defined(f64),
    /// Privileged rate is zero while the unprivileged rate is not.
    Infinite,
    /// Both rates are zero.
    Indeterminate,
}

impl DisparateImpact {
    pub fn value(self) -> Option<f64> {
        match self {
            Self::Defined(v) => Some(v),
            Self::Infinite | Self::Indeterminate => None,
        }
    }
}

fn check_binary(values: &[u8], what: &'static str) -> Result<(), FairnessError> {
    if values.iter().any(|&v| v > 1) {
        return Err(FairnessError::NonBinary(what));
    }
    Ok(())
}

fn check_len(a: usize, b: usize, what: &str) -> Result<(), FairnessError> {
    if a != b {
        return Err(FairnessError::LengthMismatch(format!("{what}: {a} vs {b}")));
    }
    Ok(())
}

/// `(favorable, total)` per group, indexed by sensitive value.
fn favorable_counts<'a>(pairs: impl Iterator<Item = (&'a u8, &'a u8)>) -> [(usize, usize); 2] {
    let mut counts = [(0, 0); 2];
    for (&pred, &a) in pairs {
        let c = &mut counts[a as usize];
        c.0 += pred as usize;
        c.1 += 1;
    }
    counts
}

pub fn disparate_impact(
    predictions: &[u8],
    sensitive: &[u8],
) -> Result<DisparateImpact, FairnessError> {
    check_len(
        predictions.len(),
        sensitive.len(),
        "predictions vs sensitive",
    )?;
    check_binary(predictions, "predictions")?;
    check_binary(sensitive, "sensitive")?;
    let [(fav0, n0), (fav1, n1)] = favorable_counts(predictions.iter().zip(sensitive));
    if n0 == 0 {
        return Err(FairnessError::EmptyGroup("unprivileged"));
    }
    if n1 == 0 {
        return Err(FairnessError::EmptyGroup("privileged"));
    }
    Ok(match (fav0, fav1) {
        (0, 0) => DisparateImpact::Indeterminate,
        (_, 0) => DisparateImpact::Infinite,
        _ => DisparateImpact::Defined((fav0 as f64 / n0 as f64) / (fav1 as f64 / n1 as f64)),
    })
}

/// True-positive rate of the unprivileged group minus that of the privileged.
pub fn equal_opportunity(
    predictions: &[u8],
    labels: &[u8],
    sensitive: &[u8],
) -> Result<f64, FairnessError> {
    check_len(predictions.len(), labels.len(), "predictions vs labels")?;
    check_len(
        predictions.len(),
        sensitive.len(),
        "predictions vs sensitive",
    )?;
    check_binary(predictions, "predictions")?;
    check_binary(labels, "labels")?;
    check_binary(sensitive, "sensitive")?;
    let positives = predictions
        .iter()
        .zip(sensitive)
        .zip(labels)
        .filter(|(_, &y)| y == 1)
        .map(|(pair, _)| pair);
    let [(tp0, p0), (tp1, p1)] = favorable_counts(positives);
    if p0 == 0 {
        return Err(FairnessError::EmptyCell { sensitive: 0 });
    }
    if p1 == 0 {
        return Err(FairnessError::EmptyCell { sensitive: 1 });
    }
    Ok(tp0 as f64 / p0 as f64 - tp1 as f64 / p1 as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyOptions {
    pub k: usize,
    /// Whether a row counts among its own neighbors.
    pub self_inclusion: bool,
}

impl Default for ConsistencyOptions {
    fn default() -> Self {
        Self {
            k: 5,
            self_inclusion: true,
        }
    }
}

/// `features` with column `drop` removed from every row.
pub fn without_column(features: &[Vec<f64>], drop: usize) -> Vec<Vec<f64>> {
    features
        .iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .filter(|(j, _)| *j != drop)
                .map(|(_, v)| *v)
                .collect()
        })
        .collect()
}

/// `1 - mean_n |yhat_n - mean_{j in kNN(x'_n)} yhat_j|`, where `x'` drops the
/// sensitive column before the neighbor search.
///
/// With `self_inclusion` the neighborhood is the row itself plus its `k - 1`
/// nearest other rows; otherwise it is the `k` nearest other rows. Ties among
/// other rows go to the lower index.
pub fn consistency_from_predictions(
    predictions: &[u8],
    features: &[Vec<f64>],
    sensitive_index: usize,
    options: ConsistencyOptions,
) -> Result<f64, FairnessError> {
    check_len(predictions.len(), features.len(), "predictions vs features")?;
    check_binary(predictions, "predictions")?;
    let n = features.len();
    let needed = if options.self_inclusion {
        options.k
    } else {
        options.k + 1
    };
    if n == 0 || options.k == 0 || needed > n {
        return Err(FairnessError::InvalidK {
            k: options.k,
            rows: n,
        });
    }
    let reduced = without_column(features, sensitive_index);
    // With self-inclusion the row always fills one of the k slots, even when
    // duplicates of it sit at distance zero with lower indices.
    let others = if options.self_inclusion {
        options.k - 1
    } else {
        options.k
    };
    let index = if others > 0 {
        Some(KnnIndex::new(reduced.clone(), others)?)
    } else {
        None
    };
    let deviations: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut total = if options.self_inclusion {
                f64::from(predictions[i])
            } else {
                0.0
            };
            if let Some(index) = &index {
                total += index
                    .query_excluding(&reduced[i], i)?
                    .iter()
                    .map(|&j| f64::from(predictions[j]))
                    .sum::<f64>();
            }
            Ok((f64::from(predictions[i]) - total / options.k as f64).abs())
        })
        .collect::<Result<_, ModelError>>()?;
    Ok(1.0 - deviations.iter().sum::<f64>() / n as f64)
}

pub fn consistency(
    model: &TrainedModel,
    features: &[Vec<f64>],
    sensitive_index: usize,
    options: ConsistencyOptions,
) -> Result<f64, FairnessError> {
    let predictions = model.predict(features)?;
    consistency_from_predictions(&predictions, features, sensitive_index, options)
}

/// The three measures for one trained pipeline on its test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub disparate_impact: DisparateImpact,
    pub equal_opportunity: f64,
    /// Absent when only predictions, not features, were available.
    pub consistency: Option<f64>,
    /// Test rows per cell, indexed `[sensitive][target]`.
    pub group_sizes: [[usize; 2]; 2],
    pub k_used: usize,
    pub self_inclusion: bool,
    /// What the consistency measure compares: always binary labels here.
    pub consistency_predictions: String,
}

pub fn group_sizes(labels: &[u8], sensitive: &[u8]) -> [[usize; 2]; 2] {
    let mut sizes = [[0; 2]; 2];
    for (&y, &a) in labels.iter().zip(sensitive) {
        sizes[a as usize & 1][y as usize & 1] += 1;
    }
    sizes
}

/// All three measures. `features` are the standardized test rows the model
/// predicted on; pass `None` to skip consistency.
pub fn evaluate(
    predictions: &[u8],
    labels: &[u8],
    sensitive: &[u8],
    features: Option<(&[Vec<f64>], usize)>,
    options: ConsistencyOptions,
) -> Result<FairnessReport, FairnessError> {
    let consistency = features
        .map(|(f, idx)| consistency_from_predictions(predictions, f, idx, options))
        .transpose()?;
    Ok(FairnessReport {
        disparate_impact: disparate_impact(predictions, sensitive)?,
        equal_opportunity: equal_opportunity(predictions, labels, sensitive)?,
        consistency,
        group_sizes: group_sizes(labels, sensitive),
        k_used: options.k,
        self_inclusion: options.self_inclusion,
        consistency_predictions: "binary_labels".into(),
    })
}
