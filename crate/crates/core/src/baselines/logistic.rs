use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::cox::solve_spd;
use crate::error::{Error, Result};
use crate::gam::logloss;
use crate::prediction::HazardClassifier;
use crate::stacking::StackedDataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticConfig {
    /// Coefficient of `(l2 / 2) ||w||^2`; the intercept is not penalized.
    pub l2: f64,
    pub max_iter: usize,
    /// Convergence threshold on the infinity norm of the per-row gradient.
    pub tol: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            l2: 1.0,
            max_iter: 100,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub feature_names: Vec<String>,
    /// One weight per stacked column; the last one belongs to the time feature.
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub l2: f64,
    pub iterations: usize,
}

impl LogisticModel {
    pub fn score(&self, x: &[f64]) -> f64 {
        self.intercept + x.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>()
    }
}

impl HazardClassifier for LogisticModel {
    fn predict_probability(&self, features: &[f64]) -> f64 {
        1.0 / (1.0 + (-self.score(features)).exp())
    }
}

fn objective(rows: &[Vec<f64>], y: &[f64], theta: &[f64], l2: f64) -> f64 {
    let (b, w) = theta.split_last().expect("intercept present");
    let loss: f64 = rows
        .iter()
        .zip(y)
        .map(|(r, &y)| logloss(b + r.iter().zip(w).map(|(a, c)| a * c).sum::<f64>(), y))
        .sum();
    loss + 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>()
}

/// L2-regularized logistic regression on stacked rows, by damped Newton steps.
pub fn fit_logistic(stacked: &StackedDataset, config: &LogisticConfig) -> Result<LogisticModel> {
    fit_logistic_rows(&stacked.rows, &stacked.labels, stacked.feature_names.clone(), config)
}

/// [`fit_logistic`] on an explicit design matrix.
pub fn fit_logistic_rows(
    rows: &[Vec<f64>],
    labels: &[bool],
    feature_names: Vec<String>,
    config: &LogisticConfig,
) -> Result<LogisticModel> {
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::SingleClass("fit_logistic"));
    }
    if rows.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: rows.len(),
            actual: labels.len(),
        });
    }
    if !(config.l2 >= 0.0) {
        return Err(Error::InvalidParameter(format!("l2 must be >= 0, got {}", config.l2)));
    }
    let d = feature_names.len();
    let n = rows.len() as f64;
    let y: Vec<f64> = labels.iter().map(|&l| f64::from(u8::from(l))).collect();
    // theta = (w_1..w_d, intercept)
    let mut theta = vec![0.0; d + 1];
    theta[d] = (pos as f64 / (n - pos as f64)).ln();
    let mut current = objective(rows, &y, &theta, config.l2);
    let mut grad_norm = f64::INFINITY;
    for iter in 0..=config.max_iter {
        let mut grad = DVector::<f64>::zeros(d + 1);
        let mut hess = DMatrix::<f64>::zeros(d + 1, d + 1);
        let mut z = DVector::<f64>::zeros(d + 1);
        for (r, &yi) in rows.iter().zip(&y) {
            z.as_mut_slice()[..d].copy_from_slice(r);
            z[d] = 1.0;
            let s = theta.iter().zip(z.iter()).map(|(a, b)| a * b).sum::<f64>();
            let p = 1.0 / (1.0 + (-s).exp());
            grad.axpy(p - yi, &z, 1.0);
            hess.ger(p * (1.0 - p), &z, &z, 1.0);
        }
        for j in 0..d {
            grad[j] += config.l2 * theta[j];
            hess[(j, j)] += config.l2;
        }
        grad_norm = grad.amax() / n;
        if grad_norm < config.tol {
            let intercept = theta.pop().unwrap_or(0.0);
            return Ok(LogisticModel {
                feature_names,
                weights: theta,
                intercept,
                l2: config.l2,
                iterations: iter,
            });
        }
        if iter == config.max_iter {
            break;
        }
        let step = solve_spd(hess, &grad)?;
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..=30 {
            let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t - scale * s).collect();
            let v = objective(rows, &y, &cand, config.l2);
            if v.is_finite() && v <= current {
                theta = cand;
                current = v;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            if grad_norm < config.tol.sqrt() {
                let intercept = theta.pop().unwrap_or(0.0);
                return Ok(LogisticModel {
                    feature_names,
                    weights: theta,
                    intercept,
                    l2: config.l2,
                    iterations: iter,
                });
            }
            break;
        }
    }
    Err(Error::NonConvergence {
        what: "logistic Newton iterations",
        iterations: config.max_iter,
        gap: grad_norm,
    })
}
