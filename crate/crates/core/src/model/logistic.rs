use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{sigmoid, ModelError};

/// L2-penalized logistic regression fitted by damped Newton iterations.
///
/// The objective is the weight-normalized mean log-loss plus
/// `l2 / 2 * ||coefficients||^2`; the intercept is not penalized. Normalizing
/// by the total weight makes the fit invariant to rescaling all weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticParams {
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self {
            l2: 1e-3,
            max_iter: 1000,
            tol: 1e-6,
        }
    }
}

impl LogisticParams {
    pub(super) fn validate(&self) -> Result<(), ModelError> {
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(ModelError::InvalidHyperparameter(format!(
                "l2 must be non-negative, got {}",
                self.l2
            )));
        }
        if self.max_iter == 0 || self.tol.is_nan() || self.tol <= 0.0 {
            return Err(ModelError::InvalidHyperparameter(
                "max_iter and tol must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl LogisticModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(x)
                .map(|(c, v)| c * v)
                .sum::<f64>()
    }

    pub fn probability(&self, x: &[f64]) -> f64 {
        sigmoid(self.decision(x))
    }
}

struct Problem<'a> {
    x: &'a [Vec<f64>],
    y: &'a [u8],
    w: Vec<f64>,
    l2: f64,
    m: usize,
}

impl Problem<'_> {
    fn margin(&self, theta: &DVector<f64>, row: &[f64]) -> f64 {
        theta[self.m]
            + row
                .iter()
                .zip(theta.iter())
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    fn objective(&self, theta: &DVector<f64>) -> f64 {
        let loss: f64 = self
            .x
            .iter()
            .zip(self.y)
            .zip(&self.w)
            .map(|((row, &y), w)| {
                let z = self.margin(theta, row);
                // log(1 + e^z) - y z, computed without overflow
                let softplus = if z > 0.0 {
                    z + (-z).exp().ln_1p()
                } else {
                    z.exp().ln_1p()
                };
                w * (softplus - f64::from(y) * z)
            })
            .sum();
        let penalty: f64 = theta.rows(0, self.m).iter().map(|c| c * c).sum();
        loss + 0.5 * self.l2 * penalty
    }

    fn gradient_and_hessian(&self, theta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let dim = self.m + 1;
        let mut grad = DVector::zeros(dim);
        let mut hess = DMatrix::zeros(dim, dim);
        let mut ext = vec![1.0; dim];
        for ((row, &y), w) in self.x.iter().zip(self.y).zip(&self.w) {
            let p = sigmoid(self.margin(theta, row));
            ext[..self.m].copy_from_slice(row);
            let r = w * (p - f64::from(y));
            let h = w * p * (1.0 - p);
            for a in 0..dim {
                grad[a] += r * ext[a];
                if h > 0.0 {
                    for b in 0..=a {
                        hess[(a, b)] += h * ext[a] * ext[b];
                    }
                }
            }
        }
        for a in 0..dim {
            for b in 0..a {
                hess[(b, a)] = hess[(a, b)];
            }
        }
        for j in 0..self.m {
            grad[j] += self.l2 * theta[j];
            hess[(j, j)] += self.l2;
        }
        (grad, hess)
    }
}

pub(super) fn fit(
    params: &LogisticParams,
    x: &[Vec<f64>],
    y: &[u8],
    weights: &[f64],
) -> LogisticModel {
    let m = x.first().map_or(0, Vec::len);
    let total: f64 = weights.iter().sum();
    let problem = Problem {
        x,
        y,
        w: weights.iter().map(|w| w / total).collect(),
        l2: params.l2,
        m,
    };
    let mut theta = DVector::zeros(m + 1);
    let mut value = problem.objective(&theta);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iter {
        let (grad, hess) = problem.gradient_and_hessian(&theta);
        if grad.norm() < params.tol {
            converged = true;
            break;
        }
        iterations += 1;
        let step = newton_direction(hess, &grad);
        // Backtracking until the objective decreases.
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-12 {
            let candidate = &theta - &step * t;
            let v = problem.objective(&candidate);
            if v <= value {
                theta = candidate;
                value = v;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if !converged {
        log::warn!("logistic regression stopped after {iterations} iterations without converging");
    }
    LogisticModel {
        coefficients: theta.rows(0, m).iter().copied().collect(),
        intercept: theta[m],
        iterations,
        converged,
    }
}

fn newton_direction(mut hess: DMatrix<f64>, grad: &DVector<f64>) -> DVector<f64> {
    let dim = grad.len();
    let mut ridge = 0.0;
    loop {
        if let Some(chol) = hess.clone().cholesky() {
            return chol.solve(grad);
        }
        // Saturated probabilities can leave the unpenalized intercept singular.
        let bump = if ridge == 0.0 { 1e-10 } else { ridge * 10.0 };
        for a in 0..dim {
            hess[(a, a)] += bump - ridge;
        }
        ridge = bump;
        if ridge > 1e6 {
            return grad.clone();
        }
    }
}
