//! Model-agnostic Shapley values.
//!
//! The coalition game for an instance `x` is the interventional expectation
//! `v(S) = mean_b f(x_S, background_b)`: features in `S` come from `x`, the rest
//! from each background row. Small feature counts are solved by enumerating
//! every coalition; larger ones use antithetic permutation sampling.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Predictor;

/// Hard ceiling for enumeration regardless of configuration (2^24 coalitions).
pub const MAX_EXACT_FEATURES: usize = 24;

#[derive(Debug, Error)]
pub enum ShapError {
    #[error("background sample is empty")]
    EmptyBackground,
    #[error("expected {expected} features, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(
        "{features} features exceed the exact-enumeration threshold of {threshold}; use sampling"
    )]
    ThresholdExceeded { features: usize, threshold: usize },
    #[error("invalid explainer config: {0}")]
    InvalidConfig(String),
    #[error("row {index}: {source}")]
    Row {
        index: usize,
        #[source]
        source: Box<ShapError>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    Sampled,
}

/// Which estimator `explain` should use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    /// Exact when the feature count is within the threshold.
    #[default]
    Auto,
    Exact,
    Sampled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainerConfig {
    pub background: Vec<Vec<f64>>,
    pub exact_threshold: usize,
    pub permutations: usize,
    pub seed: u64,
}

impl ExplainerConfig {
    pub fn new(background: Vec<Vec<f64>>) -> Self {
        Self {
            background,
            exact_threshold: 15,
            permutations: 200,
            seed: 42,
        }
    }

    fn validate(&self, width: usize) -> Result<(), ShapError> {
        if self.background.is_empty() {
            return Err(ShapError::EmptyBackground);
        }
        if let Some(row) = self.background.iter().find(|r| r.len() != width) {
            return Err(ShapError::DimensionMismatch {
                expected: width,
                found: row.len(),
            });
        }
        if self.permutations == 0 {
            return Err(ShapError::InvalidConfig(
                "permutations must be at least 1".into(),
            ));
        }
        if self.exact_threshold > MAX_EXACT_FEATURES {
            return Err(ShapError::InvalidConfig(format!(
                "exact_threshold may not exceed {MAX_EXACT_FEATURES}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub phi: Vec<f64>,
    /// Mean model output over the background sample.
    pub phi0: f64,
    /// Model output at the explained instance.
    pub fx: f64,
    pub method: Method,
    /// Per-feature standard error of the estimate; zero when exact.
    pub std_error: Vec<f64>,
    /// `fx - phi0 - sum(phi)` before the sampled estimate was adjusted.
    pub residual: f64,
}

impl Explanation {
    pub fn additivity_gap(&self) -> f64 {
        self.fx - self.phi0 - self.phi.iter().sum::<f64>()
    }
}

fn check_point<P: Predictor>(
    model: &P,
    x: &[f64],
    config: &ExplainerConfig,
) -> Result<(), ShapError> {
    let width = model.feature_count();
    if x.len() != width {
        return Err(ShapError::DimensionMismatch {
            expected: width,
            found: x.len(),
        });
    }
    config.validate(width)
}

/// `v(S)` where `coalition[j]` marks features taken from `x`.
pub fn value_function<P: Predictor>(
    model: &P,
    x: &[f64],
    coalition: &[bool],
    background: &[Vec<f64>],
) -> Result<f64, ShapError> {
    let width = model.feature_count();
    if x.len() != width || coalition.len() != width {
        return Err(ShapError::DimensionMismatch {
            expected: width,
            found: if x.len() != width {
                x.len()
            } else {
                coalition.len()
            },
        });
    }
    if background.is_empty() {
        return Err(ShapError::EmptyBackground);
    }
    if coalition.iter().all(|&c| c) {
        return Ok(model.predict_row(x));
    }
    let mut composite = vec![0.0; width];
    let mut total = 0.0;
    for row in background {
        if row.len() != width {
            return Err(ShapError::DimensionMismatch {
                expected: width,
                found: row.len(),
            });
        }
        for j in 0..width {
            composite[j] = if coalition[j] { x[j] } else { row[j] };
        }
        total += model.predict_row(&composite);
    }
    Ok(total / background.len() as f64)
}

/// Shapley kernel `s! (M-s-1)! / M!` for coalition sizes `s = 0..M`.
fn kernel_weights(m: usize) -> Vec<f64> {
    (0..m)
        .map(|s| {
            // 1 / (M * C(M-1, s)), with the binomial built multiplicatively
            let mut binom = 1.0f64;
            for t in 0..s {
                binom = binom * (m - 1 - t) as f64 / (t + 1) as f64;
            }
            1.0 / (m as f64 * binom.round())
        })
        .collect()
}

/// Shapley values by enumerating all `2^M` coalitions.
pub fn explain_exact<P: Predictor>(
    model: &P,
    x: &[f64],
    config: &ExplainerConfig,
) -> Result<Explanation, ShapError> {
    check_point(model, x, config)?;
    let m = x.len();
    if m > config.exact_threshold {
        return Err(ShapError::ThresholdExceeded {
            features: m,
            threshold: config.exact_threshold,
        });
    }
    let full = (1usize << m) - 1;
    let fx = model.predict_row(x);
    let b = config.background.len() as f64;
    let mut composite = vec![0.0; m];
    let values: Vec<f64> = (0..=full)
        .map(|mask| {
            if mask == full {
                return fx;
            }
            let mut total = 0.0;
            for row in &config.background {
                for j in 0..m {
                    composite[j] = if mask >> j & 1 == 1 { x[j] } else { row[j] };
                }
                total += model.predict_row(&composite);
            }
            total / b
        })
        .collect();
    let kernel = kernel_weights(m);
    let mut phi = vec![0.0; m];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        *p = (0..=full)
            .filter(|mask| mask & bit == 0)
            .map(|mask| kernel[mask.count_ones() as usize] * (values[mask | bit] - values[mask]))
            .sum();
    }
    let mut explanation = Explanation {
        phi,
        phi0: values[0],
        fx,
        method: Method::Exact,
        std_error: vec![0.0; m],
        residual: 0.0,
    };
    explanation.residual = explanation.additivity_gap();
    Ok(explanation)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed derived from the configured seed and the instance itself, so an
/// explanation does not depend on where the row sits in a batch.
fn instance_seed(seed: u64, x: &[f64]) -> u64 {
    x.iter()
        .fold(splitmix64(seed), |h, v| splitmix64(h ^ v.to_bits()))
}

/// Marginal contributions along one feature ordering, written into `out`.
fn walk<P: Predictor>(
    model: &P,
    x: &[f64],
    order: &[usize],
    background: &[Vec<f64>],
    phi0: f64,
    out: &mut [f64],
) {
    let mut composites = background.to_vec();
    let b = background.len() as f64;
    let mut prev = phi0;
    for &j in order {
        let mut total = 0.0;
        for row in composites.iter_mut() {
            row[j] = x[j];
            total += model.predict_row(row);
        }
        let cur = total / b;
        out[j] = cur - prev;
        prev = cur;
    }
}

/// Antithetic permutation-sampling estimate of the Shapley values.
///
/// Each sampled ordering is walked together with its reverse;
/// `ceil(permutations / 2)` such pairs are drawn. The standard error is taken
/// over pair means. Any leftover additivity residual is spread across
/// features in proportion to `|phi_i|` and recorded before adjustment.
pub fn explain_sampled<P: Predictor>(
    model: &P,
    x: &[f64],
    config: &ExplainerConfig,
) -> Result<Explanation, ShapError> {
    check_point(model, x, config)?;
    let m = x.len();
    let fx = model.predict_row(x);
    let phi0 = config
        .background
        .iter()
        .map(|r| model.predict_row(r))
        .sum::<f64>()
        / config.background.len() as f64;
    let pairs = config.permutations.div_ceil(2);
    let mut rng = ChaCha8Rng::seed_from_u64(instance_seed(config.seed, x));
    let mut order: Vec<usize> = (0..m).collect();
    let mut forward = vec![0.0; m];
    let mut backward = vec![0.0; m];
    // Welford running mean and squared deviations over pair means.
    let mut mean = vec![0.0; m];
    let mut m2 = vec![0.0; m];
    for t in 1..=pairs {
        order.shuffle(&mut rng);
        walk(model, x, &order, &config.background, phi0, &mut forward);
        order.reverse();
        walk(model, x, &order, &config.background, phi0, &mut backward);
        for j in 0..m {
            let c = 0.5 * (forward[j] + backward[j]);
            let delta = c - mean[j];
            mean[j] += delta / t as f64;
            m2[j] += delta * (c - mean[j]);
        }
    }
    let n = pairs as f64;
    let std_error = m2
        .iter()
        .map(|s| {
            if pairs < 2 {
                0.0
            } else {
                (s / (n - 1.0) / n).sqrt()
            }
        })
        .collect();
    let mut phi = mean;
    let residual = fx - phi0 - phi.iter().sum::<f64>();
    if residual != 0.0 {
        let scale: f64 = phi.iter().map(|p| p.abs()).sum();
        if scale > 0.0 {
            for p in phi.iter_mut() {
                *p += residual * p.abs() / scale;
            }
        } else {
            phi.iter_mut().for_each(|p| *p += residual / m as f64);
        }
    }
    Ok(Explanation {
        phi,
        phi0,
        fx,
        method: Method::Sampled,
        std_error,
        residual,
    })
}

pub fn explain<P: Predictor>(
    model: &P,
    x: &[f64],
    config: &ExplainerConfig,
    choice: MethodChoice,
) -> Result<Explanation, ShapError> {
    match choice {
        MethodChoice::Exact => explain_exact(model, x, config),
        MethodChoice::Sampled => explain_sampled(model, x, config),
        MethodChoice::Auto if x.len() <= config.exact_threshold => explain_exact(model, x, config),
        MethodChoice::Auto => explain_sampled(model, x, config),
    }
}

/// Explains every row in parallel; output order matches input order.
pub fn explain_batch<P: Predictor>(
    model: &P,
    rows: &[Vec<f64>],
    config: &ExplainerConfig,
    choice: MethodChoice,
) -> Result<Vec<Explanation>, ShapError> {
    rows.par_iter()
        .enumerate()
        .map(|(index, x)| {
            explain(model, x, config, choice).map_err(|e| ShapError::Row {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Linear {
        w: Vec<f64>,
        b: f64,
    }

    impl Predictor for Linear {
        fn feature_count(&self) -> usize {
            self.w.len()
        }
        fn predict_row(&self, x: &[f64]) -> f64 {
            self.b + self.w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
        }
    }

    /// x0 * x1 + x2, ignoring x3.
    struct Product;

    impl Predictor for Product {
        fn feature_count(&self) -> usize {
            4
        }
        fn predict_row(&self, x: &[f64]) -> f64 {
            x[0] * x[1] + x[2]
        }
    }

    struct Constant;

    impl Predictor for Constant {
        fn feature_count(&self) -> usize {
            3
        }
        fn predict_row(&self, _: &[f64]) -> f64 {
            0.3
        }
    }

    fn background() -> Vec<Vec<f64>> {
        vec![
            vec![0.0, 1.0, -1.0, 2.0],
            vec![1.0, 0.5, 0.0, -1.0],
            vec![-2.0, 0.0, 3.0, 0.5],
        ]
    }

    #[test]
    fn kernel_sums_to_one_over_sizes() {
        for m in 1..=15 {
            let k = kernel_weights(m);
            // sum over s of C(m-1, s) * kernel[s] = 1
            let mut binom = 1.0;
            let mut total = 0.0;
            for (s, w) in k.iter().enumerate() {
                total += binom * w;
                binom = binom * (m - 1 - s) as f64 / (s + 1) as f64;
            }
            assert!((total - 1.0).abs() < 1e-12, "m={m}");
        }
    }

    #[test]
    fn value_function_endpoints() {
        let bg = background();
        let x = [2.0, 3.0, 1.0, 0.0];
        assert_eq!(value_function(&Product, &x, &[true; 4], &bg).unwrap(), 7.0);
        let empty = value_function(&Product, &x, &[false; 4], &bg).unwrap();
        let mean = bg.iter().map(|r| Product.predict_row(r)).sum::<f64>() / 3.0;
        assert_eq!(empty, mean);
        let e = explain_exact(&Product, &x, &ExplainerConfig::new(bg.clone())).unwrap();
        assert_eq!(e.phi0, empty);
        for mask in 0..8u8 {
            let c: Vec<bool> = (0..3).map(|j| mask >> j & 1 == 1).collect();
            assert_eq!(
                value_function(
                    &Constant,
                    &[1.0, 2.0, 3.0],
                    &c,
                    &bg[..2].iter().map(|r| r[..3].to_vec()).collect::<Vec<_>>()
                )
                .unwrap(),
                0.3
            );
        }
    }

    #[test]
    fn linear_model_closed_form() {
        let model = Linear {
            w: vec![0.5, -2.0, 1.5, 0.0],
            b: 0.1,
        };
        let bg = background();
        let x = [1.0, 2.0, -1.0, 4.0];
        let e = explain_exact(&model, &x, &ExplainerConfig::new(bg.clone())).unwrap();
        for j in 0..4 {
            let mu = bg.iter().map(|r| r[j]).sum::<f64>() / bg.len() as f64;
            assert!((e.phi[j] - model.w[j] * (x[j] - mu)).abs() < 1e-12);
        }
        assert!(e.additivity_gap().abs() < 1e-12);
    }

    #[test]
    fn dummy_feature_gets_zero() {
        let e = explain_exact(
            &Product,
            &[2.0, 3.0, 1.0, 9.0],
            &ExplainerConfig::new(background()),
        )
        .unwrap();
        assert_eq!(e.phi[3], 0.0);
    }

    #[test]
    fn symmetric_features_share_credit() {
        let bg = vec![vec![0.0, 0.0, 1.0, 1.0], vec![1.0, 1.0, 0.0, 2.0]];
        let e = explain_exact(&Product, &[2.0, 2.0, 0.5, 0.0], &ExplainerConfig::new(bg)).unwrap();
        assert!((e.phi[0] - e.phi[1]).abs() < 1e-12);
    }

    #[test]
    fn threshold_guard() {
        let mut cfg = ExplainerConfig::new(background());
        cfg.exact_threshold = 3;
        assert!(matches!(
            explain_exact(&Product, &[0.0; 4], &cfg),
            Err(ShapError::ThresholdExceeded {
                features: 4,
                threshold: 3
            })
        ));
        // Auto falls back to sampling.
        let e = explain(&Product, &[0.0; 4], &cfg, MethodChoice::Auto).unwrap();
        assert_eq!(e.method, Method::Sampled);
    }

    #[test]
    fn sampled_constant_model_is_zero() {
        let bg: Vec<Vec<f64>> = background().into_iter().map(|r| r[..3].to_vec()).collect();
        for seed in 0..5 {
            let mut cfg = ExplainerConfig::new(bg.clone());
            cfg.seed = seed;
            let e = explain_sampled(&Constant, &[4.0, 5.0, 6.0], &cfg).unwrap();
            assert_eq!(e.phi, [0.0; 3]);
        }
    }

    #[test]
    fn sampled_is_exact_for_additive_models() {
        // Every ordering yields the same contributions for a linear model.
        let model = Linear {
            w: vec![1.0, -1.0, 2.0, 0.5],
            b: 0.0,
        };
        let cfg = ExplainerConfig::new(background());
        let x = [0.3, 0.2, -0.4, 1.0];
        let a = explain_exact(&model, &x, &cfg).unwrap();
        let s = explain_sampled(&model, &x, &cfg).unwrap();
        for (p, q) in a.phi.iter().zip(&s.phi) {
            assert!((p - q).abs() < 1e-12);
        }
        assert!(s.std_error.iter().all(|&e| e < 1e-12));
    }

    #[test]
    fn sampled_is_deterministic_and_position_free() {
        let cfg = ExplainerConfig::new(background());
        let rows = vec![vec![1.0, 2.0, 3.0, 4.0], vec![-1.0, 0.5, 0.0, 2.0]];
        let a = explain_batch(&Product, &rows, &cfg, MethodChoice::Sampled).unwrap();
        let swapped = vec![rows[1].clone(), rows[0].clone()];
        let b = explain_batch(&Product, &swapped, &cfg, MethodChoice::Sampled).unwrap();
        assert_eq!(a[0], b[1]);
        assert_eq!(a[1], b[0]);
        let single = explain_sampled(&Product, &rows[0], &cfg).unwrap();
        assert_eq!(single, a[0]);
    }

    #[test]
    fn batch_reports_failing_row() {
        let cfg = ExplainerConfig::new(background());
        let rows = vec![vec![0.0; 4], vec![0.0; 3]];
        match explain_batch(&Product, &rows, &cfg, MethodChoice::Exact) {
            Err(ShapError::Row { index: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn config_errors() {
        let mut cfg = ExplainerConfig::new(vec![]);
        assert!(matches!(
            explain_exact(&Product, &[0.0; 4], &cfg),
            Err(ShapError::EmptyBackground)
        ));
        cfg.background = background();
        cfg.permutations = 0;
        assert!(explain_sampled(&Product, &[0.0; 4], &cfg).is_err());
    }
}
