//! Fairness auditing for tabular binary classifiers.
//!
//! The pipeline encodes a CSV dataset, trains a classifier with and without
//! reweighing, measures group and individual fairness on the test split, and
//! attributes predictions to features with Shapley values so that feature
//! importance can be compared against the fairness measures.

pub mod audit;
pub mod cli;
pub mod data;
pub mod fairness;
pub mod model;
pub mod reweigh;
pub mod shap;
