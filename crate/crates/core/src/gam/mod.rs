//! Additive boosted classifier with pairwise interactions.
//!
//! The model is
//!
//! ```text
//! logit P(y = 1 | x) = intercept + sum_i f_i(x_i) + sum_(i,j) f_ij(x_i, x_j)
//! ```
//!
//! where every `f_i` is a per-bin lookup table over a quantile binning of
//! feature `i` and every `f_ij` a 2-D table over the product of two binnings.
//! Tables are learned by cyclic gradient boosting (see [`fit_gam`]) and then
//! centered: main effects have zero weighted mean under the training bin
//! counts, interaction tables have zero weighted row and column means, and the
//! removed mass lives in the intercept and main effects.

mod binning;
mod boost;

pub use binning::{bin_features, BinnedMatrix, FeatureBinning};
pub use boost::{fit_gam, logloss, logloss_gradient, GamConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prediction::HazardClassifier;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionTerm {
    pub first: usize,
    pub second: usize,
    /// Row-major `n_bins(first) x n_bins(second)` log-odds contributions.
    pub table: Vec<f64>,
    /// Training row counts per cell, same layout as `table`.
    pub counts: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub learning_rate: f64,
    pub main_rounds: usize,
    pub interaction_rounds: usize,
    /// Mean training log-loss after each main-effect round (index 0 = before boosting).
    pub main_loss_history: Vec<f64>,
    /// Mean training log-loss after each interaction round (index 0 = end of stage 1).
    pub interaction_loss_history: Vec<f64>,
    pub best_validation_loss: Option<f64>,
    pub bags: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GamModel {
    pub feature_names: Vec<String>,
    pub binning: Vec<FeatureBinning>,
    pub intercept: f64,
    pub main_effects: Vec<Vec<f64>>,
    pub interactions: Vec<InteractionTerm>,
    /// Training row counts per bin of each feature.
    pub bin_counts: Vec<Vec<f64>>,
    pub meta: TrainingMeta,
}

/// Centered main effect of one feature with its bin edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeFunction {
    pub feature: String,
    pub bin_low: Vec<f64>,
    pub bin_high: Vec<f64>,
    pub contributions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermImportance {
    pub term: String,
    pub importance: f64,
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

impl GamModel {
    /// Intercept-only model with empty effect tables.
    pub fn intercept_only(binned: &BinnedMatrix, intercept: f64) -> Self {
        Self {
            feature_names: binned.feature_names.clone(),
            binning: binned.binning.clone(),
            intercept,
            main_effects: binned
                .binning
                .iter()
                .map(|b| vec![0.0; b.n_bins()])
                .collect(),
            interactions: Vec::new(),
            bin_counts: (0..binned.n_features()).map(|f| binned.bin_counts(f)).collect(),
            meta: TrainingMeta::default(),
        }
    }

    pub fn n_features(&self) -> usize {
        self.binning.len()
    }

    pub fn term_names(&self) -> Vec<String> {
        self.feature_names
            .iter()
            .cloned()
            .chain(self.interactions.iter().map(|t| {
                format!(
                    "{} & {}",
                    self.feature_names[t.first], self.feature_names[t.second]
                )
            }))
            .collect()
    }

    fn bins_of(&self, x: &[f64]) -> Vec<usize> {
        self.binning
            .iter()
            .zip(x)
            .map(|(b, &v)| b.bin(v))
            .collect()
    }

    fn contributions_from_bins(&self, bins: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.main_effects.len() + self.interactions.len());
        out.extend(self.main_effects.iter().zip(bins).map(|(e, &b)| e[b]));
        out.extend(self.interactions.iter().map(|t| {
            let w = self.binning[t.second].n_bins();
            t.table[bins[t.first] * w + bins[t.second]]
        }));
        out
    }

    /// Per-term log-odds contributions (main effects, then interactions).
    pub fn term_contributions(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x.len())?;
        Ok(self.contributions_from_bins(&self.bins_of(x)))
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                actual: d,
            });
        }
        Ok(())
    }

    fn score_unchecked(&self, x: &[f64]) -> f64 {
        let bins = self.bins_of(x);
        self.contributions_from_bins(&bins)
            .into_iter()
            .fold(self.intercept, |acc, c| acc + c)
    }

    /// Pre-logistic additive score; equal to the intercept plus the terms of
    /// [`GamModel::term_contributions`] summed in order.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x.len())?;
        Ok(self.score_unchecked(x))
    }

    pub fn predict_probability(&self, x: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.score(x)?))
    }

    pub fn shape_function(&self, feature: usize) -> Result<ShapeFunction> {
        let binning = self.binning.get(feature).ok_or(Error::OutOfRange {
            index: feature,
            len: self.n_features(),
        })?;
        let (bin_low, bin_high) = (0..binning.n_bins()).map(|b| binning.edges(b)).unzip();
        Ok(ShapeFunction {
            feature: self.feature_names[feature].clone(),
            bin_low,
            bin_high,
            contributions: self.main_effects[feature].clone(),
        })
    }

    /// Re-centers every term under the stored training counts.
    ///
    /// Interaction row/column means move into the main effects (alternating
    /// until stable), then main-effect means move into the intercept. Scores are
    /// unchanged for every input.
    pub fn center(&mut self) {
        for term in &mut self.interactions {
            let rows = self.binning[term.first].n_bins();
            let cols = self.binning[term.second].n_bins();
            for _ in 0..1000 {
                let mut largest: f64 = 0.0;
                for a in 0..rows {
                    let (mut w, mut m) = (0.0, 0.0);
                    for b in 0..cols {
                        w += term.counts[a * cols + b];
                        m += term.counts[a * cols + b] * term.table[a * cols + b];
                    }
                    if w > 0.0 {
                        let r = m / w;
                        for b in 0..cols {
                            term.table[a * cols + b] -= r;
                        }
                        self.main_effects[term.first][a] += r;
                        largest = largest.max(r.abs());
                    }
                }
                for b in 0..cols {
                    let (mut w, mut m) = (0.0, 0.0);
                    for a in 0..rows {
                        w += term.counts[a * cols + b];
                        m += term.counts[a * cols + b] * term.table[a * cols + b];
                    }
                    if w > 0.0 {
                        let c = m / w;
                        for a in 0..rows {
                            term.table[a * cols + b] -= c;
                        }
                        self.main_effects[term.second][b] += c;
                        largest = largest.max(c.abs());
                    }
                }
                if largest < 1e-13 {
                    break;
                }
            }
        }
        for (effect, counts) in self.main_effects.iter_mut().zip(&self.bin_counts) {
            let w: f64 = counts.iter().sum();
            if w <= 0.0 {
                continue;
            }
            let m = effect.iter().zip(counts).map(|(e, c)| e * c).sum::<f64>() / w;
            effect.iter_mut().for_each(|e| *e -= m);
            self.intercept += m;
        }
    }

    /// Mean absolute contribution of every term over the rows of `binned`,
    /// sorted by decreasing importance. `binned` must use this model's edges.
    pub fn feature_importance(&self, binned: &BinnedMatrix) -> Vec<TermImportance> {
        let n = binned.n_rows.max(1) as f64;
        let names = self.term_names();
        let mut out: Vec<TermImportance> = Vec::with_capacity(names.len());
        for (f, effect) in self.main_effects.iter().enumerate() {
            let total: f64 = binned.codes[f].iter().map(|&b| effect[b as usize].abs()).sum();
            out.push(TermImportance {
                term: names[f].clone(),
                importance: total / n,
            });
        }
        for (k, t) in self.interactions.iter().enumerate() {
            let w = self.binning[t.second].n_bins();
            let total: f64 = binned.codes[t.first]
                .iter()
                .zip(&binned.codes[t.second])
                .map(|(&a, &b)| t.table[a as usize * w + b as usize].abs())
                .sum();
            out.push(TermImportance {
                term: names[self.main_effects.len() + k].clone(),
                importance: total / n,
            });
        }
        out.sort_by(|a, b| b.importance.total_cmp(&a.importance));
        out
    }

    /// Bins rows with this model's edges.
    pub fn bin_rows(&self, rows: &[Vec<f64>]) -> Result<BinnedMatrix> {
        BinnedMatrix::apply(self.feature_names.clone(), self.binning.clone(), rows)
    }
}

impl HazardClassifier for GamModel {
    fn predict_probability(&self, features: &[f64]) -> f64 {
        debug_assert_eq!(features.len(), self.n_features());
        sigmoid(self.score_unchecked(features))
    }
}
