//! Reweighing: per-instance weights that make the sensitive attribute and the
//! target independent under the weighted training distribution.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;

#[derive(Debug, Error, PartialEq)]
pub enum ReweighError {
    #[error("no training rows with sensitive={sensitive} and target={target}; reweighing weights are undefined")]
    EmptyCell { sensitive: u8, target: u8 },
    #[error("weight vector has {found} entries, dataset has {expected} rows")]
    LengthMismatch { expected: usize, found: usize },
    #[error("weights must be positive and finite")]
    NonPositive,
}

/// Weight for one `(sensitive, target)` cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellWeight {
    pub sensitive: u8,
    pub target: u8,
    pub count: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReweighWeights {
    /// Indexed `[sensitive][target]`.
    pub cell_weights: [[f64; 2]; 2],
    #[serde(skip)]
    pub per_row: Vec<f64>,
}

impl ReweighWeights {
    pub fn weight(&self, sensitive: u8, target: u8) -> f64 {
        self.cell_weights[sensitive as usize][target as usize]
    }

    /// The four cells in `(0,0), (0,1), (1,0), (1,1)` order.
    pub fn cells(&self, counts: [[usize; 2]; 2]) -> Vec<CellWeight> {
        let mut out = Vec::with_capacity(4);
        for a in 0..2u8 {
            for y in 0..2u8 {
                out.push(CellWeight {
                    sensitive: a,
                    target: y,
                    count: counts[a as usize][y as usize],
                    weight: self.weight(a, y),
                });
            }
        }
        out
    }
}

/// Cell weights `P(A=a) P(Y=y) / P(A=a, Y=y)` from empirical frequencies.
pub fn cell_weights(counts: [[usize; 2]; 2]) -> Result<[[f64; 2]; 2], ReweighError> {
    let n: usize = counts.iter().flatten().sum();
    let by_group = [counts[0][0] + counts[0][1], counts[1][0] + counts[1][1]];
    let by_label = [counts[0][0] + counts[1][0], counts[0][1] + counts[1][1]];
    let mut w = [[0.0; 2]; 2];
    for a in 0..2 {
        for y in 0..2 {
            if counts[a][y] == 0 {
                return Err(ReweighError::EmptyCell {
                    sensitive: a as u8,
                    target: y as u8,
                });
            }
            // Exact in integers up to the final division.
            w[a][y] = (by_group[a] as f64 * by_label[y] as f64) / (n as f64 * counts[a][y] as f64);
        }
    }
    Ok(w)
}

pub fn compute_weights(train: &Dataset) -> Result<ReweighWeights, ReweighError> {
    let cell_weights = cell_weights(train.group_counts())?;
    let per_row = train
        .sensitive
        .iter()
        .zip(&train.target)
        .map(|(&a, &y)| cell_weights[a as usize][y as usize])
        .collect();
    Ok(ReweighWeights {
        cell_weights,
        per_row,
    })
}

/// Replaces the dataset's weights; features are left untouched.
pub fn apply_weights(dataset: &Dataset, weights: &[f64]) -> Result<Dataset, ReweighError> {
    if weights.len() != dataset.len() {
        return Err(ReweighError::LengthMismatch {
            expected: dataset.len(),
            found: weights.len(),
        });
    }
    if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(ReweighError::NonPositive);
    }
    Ok(Dataset {
        weights: weights.to_vec(),
        ..dataset.clone()
    })
}

/// Weighted `P(Y=1 | A=a)` for `a = 0, 1`.
pub fn weighted_favorable_rates(dataset: &Dataset) -> [f64; 2] {
    let mut num = [0.0; 2];
    let mut den = [0.0; 2];
    for ((&a, &y), w) in dataset
        .sensitive
        .iter()
        .zip(&dataset.target)
        .zip(&dataset.weights)
    {
        den[a as usize] += w;
        if y == 1 {
            num[a as usize] += w;
        }
    }
    [num[0] / den[0], num[1] / den[1]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::EncodingSchema;

    pub(crate) fn cells_dataset(counts: [[usize; 2]; 2]) -> Dataset {
        let mut sensitive = Vec::new();
        let mut target = Vec::new();
        for a in 0..2u8 {
            for y in 0..2u8 {
                for _ in 0..counts[a as usize][y as usize] {
                    sensitive.push(a);
                    target.push(y);
                }
            }
        }
        let n = target.len();
        Dataset {
            features: sensitive.iter().map(|&a| vec![f64::from(a)]).collect(),
            feature_names: vec!["a".into()],
            target,
            sensitive,
            weights: vec![1.0; n],
            sensitive_index: 0,
            schema: EncodingSchema {
                columns: vec![],
                target_column: "y".into(),
                favorable_label: "1".into(),
                unfavorable_label: "0".into(),
                privileged_values: vec!["1".into()],
                unprivileged_values: vec!["0".into()],
            },
        }
    }

    #[test]
    fn independent_cells_weigh_one() {
        let w = compute_weights(&cells_dataset([[25, 25], [25, 25]])).unwrap();
        assert_eq!(w.cell_weights, [[1.0; 2]; 2]);
        assert!(w.per_row.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn hand_computed_cells() {
        // [a][y]: (A=1,Y=1)=40, (A=1,Y=0)=10, (A=0,Y=1)=10, (A=0,Y=0)=40
        let w = compute_weights(&cells_dataset([[40, 10], [10, 40]])).unwrap();
        assert_eq!(w.weight(1, 1), 0.625);
        assert_eq!(w.weight(1, 0), 2.5);
        assert_eq!(w.weight(0, 1), 2.5);
        assert_eq!(w.weight(0, 0), 0.625);
    }

    #[test]
    fn empty_cell_is_named() {
        assert_eq!(
            compute_weights(&cells_dataset([[3, 0], [2, 2]])).unwrap_err(),
            ReweighError::EmptyCell {
                sensitive: 0,
                target: 1
            }
        );
    }

    #[test]
    fn apply_replaces_weights_only() {
        let ds = cells_dataset([[3, 1], [2, 2]]);
        let w = compute_weights(&ds).unwrap();
        let once = apply_weights(&ds, &w.per_row).unwrap();
        assert_eq!(once.features, ds.features);
        assert_eq!(apply_weights(&once, &w.per_row).unwrap(), once);
        assert_eq!(apply_weights(&ds, &[1.0; 8]).unwrap(), ds);
        assert!(matches!(
            apply_weights(&ds, &[1.0; 3]),
            Err(ReweighError::LengthMismatch { .. })
        ));
        assert_eq!(
            apply_weights(&ds, &[0.0; 8]),
            Err(ReweighError::NonPositive)
        );
    }

    #[test]
    fn per_row_weights_sum_to_n() {
        let ds = cells_dataset([[7, 3], [11, 19]]);
        let w = compute_weights(&ds).unwrap();
        let sum: f64 = w.per_row.iter().sum();
        assert!((sum - ds.len() as f64).abs() < 1e-12);
    }
}
