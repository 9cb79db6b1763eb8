//! Survival stacking with majority-class subsampling.
//!
//! For every distinct event time `t` (ascending) the stacked data receives one
//! positive row `(x_i || t, 1)` per record with an event at `t`, and one negative
//! row `(x_j || t, 0)` for each record with `T_j > t` that survives an independent
//! Bernoulli(`gamma`) draw. Time enters as a single raw (unstandardized)
//! continuous feature appended after the covariates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};

/// Column name of the appended time feature.
pub const STACK_TIME_COLUMN: &str = "stack_time";
/// Column name of the binary label in exported stacked data.
pub const LABEL_COLUMN: &str = "label";

/// Default negative sampling ratio.
pub const DEFAULT_GAMMA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StackingConfig {
    /// Probability of keeping each at-risk negative row, in `(0, 1]`.
    pub gamma: f64,
    pub seed: u64,
}

impl Default for StackingConfig {
    fn default() -> Self {
        Self {
            gamma: DEFAULT_GAMMA,
            seed: 0,
        }
    }
}

impl StackingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Where a stacked row came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: usize,
    pub risk_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackedDataset {
    /// `d + 1` columns; the last one is the risk-set time.
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
    pub provenance: Vec<Provenance>,
    /// Covariate names followed by [`STACK_TIME_COLUMN`].
    pub feature_names: Vec<String>,
}

impl StackedDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_positive(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }
}

/// Expected output size of [`stack`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedSize {
    pub positives: usize,
    pub expected_negatives: f64,
}

/// Record indices sorted by time (ties by index).
fn time_order(dataset: &SurvivalDataset) -> (Vec<usize>, Vec<f64>) {
    let records = dataset.records();
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[a].time.total_cmp(&records[b].time));
    let sorted_times = order.iter().map(|&i| records[i].time).collect();
    (order, sorted_times)
}

/// Indices kept by independent Bernoulli(`gamma`) draws over `candidates`.
///
/// Uses geometric gaps between successes, which has the same law as one draw per
/// candidate.
fn bernoulli_subsample(candidates: &[usize], gamma: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if gamma >= 1.0 {
        return candidates.to_vec();
    }
    let log_q = (1.0 - gamma).ln();
    let mut out = Vec::with_capacity((candidates.len() as f64 * gamma * 1.5) as usize + 4);
    let mut pos = 0usize;
    loop {
        // u in (0, 1]
        let u: f64 = 1.0 - rng.random::<f64>();
        let gap = (u.ln() / log_q).floor();
        if !gap.is_finite() || gap >= (candidates.len() - pos.min(candidates.len())) as f64 {
            break;
        }
        pos += gap as usize;
        if pos >= candidates.len() {
            break;
        }
        out.push(candidates[pos]);
        pos += 1;
    }
    out
}

/// Expands survival data into binary classification rows over risk sets.
///
/// Each event time draws from its own RNG stream derived from `config.seed`, so the
/// output does not depend on how the work is scheduled.
pub fn stack(dataset: &SurvivalDataset, config: &StackingConfig) -> Result<StackedDataset> {
    config.validate()?;
    if dataset.n_events() == 0 {
        return Err(Error::DegenerateDataset("stacking needs at least one event".into()));
    }
    let records = dataset.records();
    let (order, sorted_times) = time_order(dataset);
    let event_times = dataset.distinct_event_times();

    let blocks: Vec<(Vec<usize>, Vec<usize>)> = event_times
        .par_iter()
        .enumerate()
        .map(|(k, &t)| {
            let lo = sorted_times.partition_point(|&s| s < t);
            let hi = sorted_times.partition_point(|&s| s <= t);
            let mut positives: Vec<usize> = order[lo..hi]
                .iter()
                .copied()
                .filter(|&i| records[i].event)
                .collect();
            positives.sort_unstable();
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(k as u64);
            let mut negatives = bernoulli_subsample(&order[hi..], config.gamma, &mut rng);
            negatives.sort_unstable();
            (positives, negatives)
        })
        .collect();

    let total: usize = blocks.iter().map(|(p, n)| p.len() + n.len()).sum();
    let mut rows = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    let mut provenance = Vec::with_capacity(total);
    for ((positives, negatives), &t) in blocks.iter().zip(&event_times) {
        for (idx, label) in positives
            .iter()
            .map(|&i| (i, true))
            .chain(negatives.iter().map(|&i| (i, false)))
        {
            let mut row = Vec::with_capacity(dataset.n_features() + 1);
            row.extend_from_slice(&records[idx].covariates);
            row.push(t);
            rows.push(row);
            labels.push(label);
            provenance.push(Provenance {
                source: idx,
                risk_time: t,
            });
        }
    }
    let mut feature_names = dataset.feature_names().to_vec();
    feature_names.push(STACK_TIME_COLUMN.to_string());
    Ok(StackedDataset {
        rows,
        labels,
        provenance,
        feature_names,
    })
}

/// Positive count and expected negative count of [`stack`] at the given `gamma`.
pub fn expected_size(dataset: &SurvivalDataset, gamma: f64) -> ExpectedSize {
    let (_, sorted_times) = time_order(dataset);
    let n = sorted_times.len();
    let negatives: usize = dataset
        .distinct_event_times()
        .iter()
        .map(|&t| n - sorted_times.partition_point(|&s| s <= t))
        .sum();
    ExpectedSize {
        positives: dataset.n_events(),
        expected_negatives: gamma * negatives as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SurvivalRecord;

    fn three() -> SurvivalDataset {
        SurvivalDataset::new(
            vec![
                SurvivalRecord::new(vec![10.0], 1.0, true),
                SurvivalRecord::new(vec![20.0], 2.0, true),
                SurvivalRecord::new(vec![30.0], 3.0, false),
            ],
            vec!["x".into()],
        )
        .unwrap()
    }

    #[test]
    fn full_stack_hand_example() {
        let s = stack(&three(), &StackingConfig { gamma: 1.0, seed: 0 }).unwrap();
        let expect = vec![
            (vec![10.0, 1.0], true),
            (vec![20.0, 1.0], false),
            (vec![30.0, 1.0], false),
            (vec![20.0, 2.0], true),
            (vec![30.0, 2.0], false),
        ];
        let got: Vec<(Vec<f64>, bool)> = s.rows.iter().cloned().zip(s.labels.iter().copied()).collect();
        assert_eq!(got, expect);
        assert_eq!(s.feature_names, vec!["x", STACK_TIME_COLUMN]);
    }

    #[test]
    fn tiny_gamma_keeps_only_positives() {
        let s = stack(&three(), &StackingConfig { gamma: 1e-12, seed: 3 }).unwrap();
        assert_eq!(s.len(), 2);
        assert!(s.labels.iter().all(|&l| l));
    }

    #[test]
    fn single_event_record() {
        let ds = SurvivalDataset::new(vec![SurvivalRecord::new(vec![1.0], 4.0, true)], vec!["x".into()]).unwrap();
        let s = stack(&ds, &StackingConfig { gamma: 1.0, seed: 0 }).unwrap();
        assert_eq!(s.rows, vec![vec![1.0, 4.0]]);
        assert_eq!(s.labels, vec![true]);
    }

    #[test]
    fn expected_size_examples() {
        let ds = three();
        assert_eq!(
            expected_size(&ds, 1.0),
            ExpectedSize { positives: 2, expected_negatives: 3.0 }
        );
        assert_eq!(expected_size(&ds, 0.5).expected_negatives, 1.5);
    }

    #[test]
    fn invalid_gamma_rejected() {
        assert!(stack(&three(), &StackingConfig { gamma: 0.0, seed: 0 }).is_err());
        assert!(stack(&three(), &StackingConfig { gamma: 1.5, seed: 0 }).is_err());
    }

    #[test]
    fn subsample_rate_matches_gamma() {
        let cands: Vec<usize> = (0..200_000).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let kept = bernoulli_subsample(&cands, 0.03, &mut rng);
        let expect = 6000.0;
        let sd = (200_000.0f64 * 0.03 * 0.97).sqrt();
        assert!((kept.len() as f64 - expect).abs() < 5.0 * sd, "{}", kept.len());
        assert!(kept.windows(2).all(|w| w[0] < w[1]));
    }
}
