use serde::{Deserialize, Serialize};

use super::forest::Forest;
use crate::error::{Error, Result};

const TOLERANCE: f64 = 1e-7;
const MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub weights: Vec<f64>,
    pub lambda: f64,
    /// Objective value after each sweep; entry 0 is the starting point.
    pub objective: Vec<f64>,
    pub sweeps: usize,
}

/// Sufficient statistics of `(1/2m)||y - P w||^2`.
pub(crate) struct Gram {
    /// `P^T P / m`, row-major.
    g: Vec<f64>,
    /// `P^T y / m`.
    c: Vec<f64>,
    /// `||y||^2 / (2m)`.
    y_term: f64,
    k: usize,
}

impl Gram {
    pub(crate) fn new(columns: &[Vec<f64>], y: &[f64]) -> Self {
        let m = y.len() as f64;
        let k = columns.len();
        let mean = y.iter().sum::<f64>() / m;
        let yc: Vec<f64> = y.iter().map(|v| v - mean).collect();
        let mut g = vec![0.0; k * k];
        for a in 0..k {
            for b in a..k {
                let v = columns[a].iter().zip(&columns[b]).map(|(x, y)| x * y).sum::<f64>() / m;
                g[a * k + b] = v;
                g[b * k + a] = v;
            }
        }
        let c = columns
            .iter()
            .map(|col| col.iter().zip(&yc).map(|(x, y)| x * y).sum::<f64>() / m)
            .collect();
        let y_term = yc.iter().map(|v| v * v).sum::<f64>() / (2.0 * m);
        Self { g, c, y_term, k }
    }

    fn objective(&self, w: &[f64], lambda: f64) -> f64 {
        let mut quad = 0.0;
        for a in 0..self.k {
            if w[a] == 0.0 {
                continue;
            }
            let row = &self.g[a * self.k..(a + 1) * self.k];
            quad += w[a] * row.iter().zip(w).map(|(g, w)| g * w).sum::<f64>();
        }
        let lin: f64 = self.c.iter().zip(w).map(|(c, w)| c * w).sum();
        let l1: f64 = w.iter().map(|v| v.abs()).sum();
        self.y_term - lin + 0.5 * quad + lambda * l1
    }

    pub(crate) fn lambda_max(&self) -> f64 {
        self.c.iter().fold(0.0, |a, c| a.max(c.abs()))
    }

    /// Cyclic coordinate descent from `start`.
    pub(crate) fn solve(&self, lambda: f64, start: Option<&[f64]>) -> Result<LassoFit> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {lambda}")));
        }
        let k = self.k;
        let mut w = start.map_or_else(|| vec![0.0; k], <[f64]>::to_vec);
        // gw[a] = (G w)[a], kept in sync with w
        let mut gw: Vec<f64> = (0..k)
            .map(|a| self.g[a * k..(a + 1) * k].iter().zip(&w).map(|(g, w)| g * w).sum())
            .collect();
        let mut objective = vec![self.objective(&w, lambda)];
        let mut last_change = f64::INFINITY;
        for sweep in 1..=MAX_SWEEPS {
            let mut max_change: f64 = 0.0;
            for j in 0..k {
                let gjj = self.g[j * k + j];
                if gjj <= 0.0 {
                    continue;
                }
                let rho = self.c[j] - gw[j] + gjj * w[j];
                let new = soft_threshold(rho, lambda) / gjj;
                let delta = new - w[j];
                if delta != 0.0 {
                    for (a, v) in gw.iter_mut().enumerate() {
                        *v += self.g[a * k + j] * delta;
                    }
                    w[j] = new;
                    max_change = max_change.max(delta.abs());
                }
            }
            objective.push(self.objective(&w, lambda));
            last_change = max_change;
            if max_change < TOLERANCE {
                return Ok(LassoFit {
                    weights: w,
                    lambda,
                    objective,
                    sweeps: sweep,
                });
            }
        }
        Err(Error::NonConvergence {
            what: "lasso coordinate descent",
            iterations: MAX_SWEEPS,
            gap: last_change,
        })
    }
}

fn soft_threshold(x: f64, lambda: f64) -> f64 {
    if x > lambda {
        x - lambda
    } else if x < -lambda {
        x + lambda
    } else {
        0.0
    }
}

fn targets(labels: &[bool]) -> Vec<f64> {
    labels.iter().map(|&l| f64::from(u8::from(l))).collect()
}

/// Smallest `lambda` at which every tree weight is zero.
pub fn lambda_max(forest: &Forest, labels: &[bool]) -> f64 {
    Gram::new(&forest.predictions, &targets(labels)).lambda_max()
}

/// Weights the trees by solving
/// `min_w (1/2m)||y_c - P w||^2 + lambda ||w||_1`
/// with cyclic coordinate descent, where the columns of `P` are the trees'
/// centered predictions and `y_c` the centered labels.
pub fn lasso_prune(forest: &Forest, labels: &[bool], lambda: f64) -> Result<LassoFit> {
    if forest.predictions.first().is_some_and(|p| p.len() != labels.len()) {
        return Err(Error::DimensionMismatch {
            expected: forest.predictions[0].len(),
            actual: labels.len(),
        });
    }
    Gram::new(&forest.predictions, &targets(labels)).solve(lambda, None)
}

/// Same objective on explicit columns, for callers outside the forest setting.
pub fn lasso_columns(columns: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<LassoFit> {
    Gram::new(columns, y).solve(lambda, None)
}
