use rand::distributions::{Distribution, Uniform, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{Tree, TreeParams};
use super::ModelError;

/// How sample weights enter the forest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForestWeighting {
    /// Bootstrap rows with probability proportional to weight.
    Bootstrap,
    /// Uniform bootstrap; weights act as fractional counts in the impurity.
    Impurity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// Features per split; `None` means `floor(sqrt(M))`.
    pub max_features: Option<usize>,
    pub weighting: ForestWeighting,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_samples_split: 2,
            max_features: None,
            weighting: ForestWeighting::Bootstrap,
        }
    }
}

impl ForestParams {
    pub(super) fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidHyperparameter(m.into()));
        if self.n_trees == 0 {
            return bad("n_trees must be positive");
        }
        if self.max_depth == Some(0) {
            return bad("max_depth must be at least 1");
        }
        if self.min_samples_split < 2 {
            return bad("min_samples_split must be at least 2");
        }
        if self.max_features == Some(0) {
            return bad("max_features must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
}

impl ForestModel {
    /// Mean of per-tree leaf class-1 fractions.
    pub fn probability(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

pub(super) fn fit(
    params: &ForestParams,
    x: &[Vec<f64>],
    y: &[u8],
    weights: &[f64],
    seed: u64,
) -> ForestModel {
    let n = y.len();
    let width = x.first().map_or(0, Vec::len);
    let target: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_split: params.min_samples_split,
        max_features: Some(
            params
                .max_features
                .unwrap_or_else(|| ((width as f64).sqrt() as usize).max(1)),
        ),
    };
    let total: f64 = weights.iter().sum();
    let normalized: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let unit = vec![1.0; n];
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let (rows, tree_weights): (Vec<usize>, &[f64]) = match params.weighting {
                ForestWeighting::Bootstrap => {
                    let dist = WeightedIndex::new(&normalized).expect("weights validated positive");
                    ((0..n).map(|_| dist.sample(&mut rng)).collect(), &unit)
                }
                ForestWeighting::Impurity => {
                    let dist = Uniform::new(0, n);
                    ((0..n).map(|_| dist.sample(&mut rng)).collect(), weights)
                }
            };
            Tree::fit(x, &target, tree_weights, rows, &tree_params, &mut rng)
        })
        .collect();
    ForestModel { trees }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn impurity_weighting_variant_trains() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, (i % 7) as f64]).collect();
        let y: Vec<u8> = (0..30).map(|i| u8::from(i > 14)).collect();
        let w: Vec<f64> = (0..30).map(|i| 1.0 + (i % 3) as f64).collect();
        let params = ForestParams {
            n_trees: 10,
            weighting: ForestWeighting::Impurity,
            ..Default::default()
        };
        let m = fit(&params, &x, &y, &w, 4);
        assert_eq!(m.trees.len(), 10);
        assert!(m.probability(&[29.0, 1.0]) > 0.5);
        assert!(m.probability(&[0.0, 0.0]) < 0.5);
    }

    #[test]
    fn heavy_weights_dominate_bootstrap() {
        // Identical inputs with conflicting labels; the forest follows the weight.
        let x = vec![vec![0.0]; 40];
        let y: Vec<u8> = (0..40).map(|i| u8::from(i < 20)).collect();
        let w: Vec<f64> = (0..40).map(|i| if i < 20 { 9.0 } else { 1.0 }).collect();
        let m = fit(&ForestParams::default(), &x, &y, &w, 0);
        let p = m.probability(&[0.0]);
        assert!((p - 0.9).abs() < 0.05, "{p}");
    }

    #[test]
    fn invalid_params_rejected() {
        for p in [
            ForestParams {
                n_trees: 0,
                ..Default::default()
            },
            ForestParams {
                max_depth: Some(0),
                ..Default::default()
            },
            ForestParams {
                min_samples_split: 1,
                ..Default::default()
            },
        ] {
            assert!(p.validate().is_err());
        }
    }
}
