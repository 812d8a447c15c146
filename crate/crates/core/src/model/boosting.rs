use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{Node, Tree, TreeParams};
use super::{sigmoid, ModelError};

/// Gradient boosting on the logistic loss with Newton leaf values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostingParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_split: usize,
}

impl Default for BoostingParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 3,
            learning_rate: 0.1,
            min_samples_split: 2,
        }
    }
}

impl BoostingParams {
    pub(super) fn validate(&self) -> Result<(), ModelError> {
        if self.max_depth == 0 {
            return Err(ModelError::InvalidHyperparameter(
                "max_depth must be at least 1".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(ModelError::InvalidHyperparameter(format!(
                "learning_rate must lie in (0,1], got {}",
                self.learning_rate
            )));
        }
        if self.min_samples_split < 2 {
            return Err(ModelError::InvalidHyperparameter(
                "min_samples_split must be at least 2".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostingModel {
    /// Log-odds of the weighted base rate.
    pub init: f64,
    pub learning_rate: f64,
    /// Leaf values are already Newton steps; they are scaled by the rate.
    pub trees: Vec<Tree>,
}

impl BoostingModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.init + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn probability(&self, x: &[f64]) -> f64 {
        sigmoid(self.decision(x))
    }

    /// Decision values after 0, 1, ..., `trees.len()` rounds.
    pub fn staged_decision(&self, x: &[f64]) -> Vec<f64> {
        let mut f = self.init;
        let mut out = Vec::with_capacity(self.trees.len() + 1);
        out.push(f);
        for t in &self.trees {
            f += self.learning_rate * t.predict(x);
            out.push(f);
        }
        out
    }
}

pub(super) fn fit(
    params: &BoostingParams,
    x: &[Vec<f64>],
    y: &[u8],
    weights: &[f64],
) -> BoostingModel {
    let n = y.len();
    let target: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
    let w_sum: f64 = weights.iter().sum();
    let base = weights.iter().zip(&target).map(|(w, t)| w * t).sum::<f64>() / w_sum;
    let init = (base / (1.0 - base)).ln();
    let tree_params = TreeParams {
        max_depth: Some(params.max_depth),
        min_samples_split: params.min_samples_split,
        max_features: None,
    };
    // All features are considered, so the generator is never consulted.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut decision = vec![init; n];
    let mut trees = Vec::with_capacity(params.n_trees);
    for _ in 0..params.n_trees {
        let prob: Vec<f64> = decision.iter().map(|&f| sigmoid(f)).collect();
        let residual: Vec<f64> = target.iter().zip(&prob).map(|(t, p)| t - p).collect();
        let mut tree = Tree::fit(
            x,
            &residual,
            weights,
            (0..n).collect(),
            &tree_params,
            &mut rng,
        );
        let leaves: Vec<usize> = x.iter().map(|row| tree.apply(row)).collect();
        let mut num = vec![0.0; tree.nodes.len()];
        let mut den = vec![0.0; tree.nodes.len()];
        for i in 0..n {
            num[leaves[i]] += weights[i] * residual[i];
            den[leaves[i]] += weights[i] * prob[i] * (1.0 - prob[i]);
        }
        for (id, node) in tree.nodes.iter_mut().enumerate() {
            if let Node::Leaf { value } = node {
                *value = if den[id].abs() < 1e-150 {
                    0.0
                } else {
                    num[id] / den[id]
                };
            }
        }
        for i in 0..n {
            decision[i] += params.learning_rate * tree.predict(&x[i]);
        }
        trees.push(tree);
    }
    BoostingModel {
        init,
        learning_rate: params.learning_rate,
        trees,
    }
}
