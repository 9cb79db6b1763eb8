//! Feature selection by LASSO-pruning a forest of shallow trees.
//!
//! A forest is grown on binary labels, the trees' centered predictions become the
//! columns of a LASSO problem, and the features kept are the ones split on by
//! trees whose weight survives. The regularization strength is chosen by
//! bisection to hit a target feature count.

mod forest;
mod lasso;

pub use forest::{grow_forest, Forest, ForestConfig, Node, Tree};
pub use lasso::{lambda_max, lasso_columns, lasso_prune, LassoFit};

use serde::{Deserialize, Serialize};

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use lasso::Gram;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectConfig {
    pub forest: ForestConfig,
    pub bisection_steps: usize,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self {
            forest: ForestConfig::default(),
            bisection_steps: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Selected column indices, ascending.
    pub selected: Vec<usize>,
    pub tree_weights: Vec<f64>,
    pub lambda: f64,
    /// Per-column `sum_t |w_t| * splits_t(column)`.
    pub scores: Vec<f64>,
}

impl SelectionResult {
    /// Plain-text report: header lines, then `feature<TAB>score<TAB>selected` rows.
    pub fn report(&self, names: &[String]) -> String {
        let mut out = String::new();
        out.push_str(&format!("lambda\t{}\n", self.lambda));
        let kept = self.tree_weights.iter().filter(|w| **w != 0.0).count();
        out.push_str(&format!("nonzero_weights\t{kept}/{}\n", self.tree_weights.len()));
        out.push_str("selected\t");
        let sel: Vec<&str> = self.selected.iter().map(|&i| names[i].as_str()).collect();
        out.push_str(&sel.join(","));
        out.push('\n');
        out.push_str("weights\t");
        let w: Vec<String> = self.tree_weights.iter().map(|w| format!("{w}")).collect();
        out.push_str(&w.join(","));
        out.push_str("\n\nfeature\tscore\tselected\n");
        for (i, name) in names.iter().enumerate() {
            let chosen = self.selected.binary_search(&i).is_ok();
            out.push_str(&format!("{name}\t{}\t{}\n", self.scores[i], u8::from(chosen)));
        }
        out
    }
}

/// Groups touched by trees with a nonzero weight.
fn surviving_groups(forest: &Forest, weights: &[f64], groups: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = forest
        .features
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w != 0.0)
        .flat_map(|(fs, _)| fs.iter().map(|&f| groups[f]))
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Selects exactly `k` feature groups.
///
/// `groups[c]` is the group id of column `c` (see
/// [`SurvivalDataset::feature_groups`]); a group is kept or dropped as a whole
/// and counts once toward `k`. Bisection finds the largest `lambda` whose
/// surviving union holds at least `k` groups; ties past `k` are cut by
/// descending aggregate score, then by split count, then by lowest group id.
pub fn select_features(
    rows: &[Vec<f64>],
    labels: &[bool],
    groups: &[usize],
    k: usize,
    config: &SelectConfig,
) -> Result<SelectionResult> {
    let d = rows.first().map_or(0, Vec::len);
    if groups.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: groups.len(),
        });
    }
    let n_groups = groups.iter().max().map_or(0, |g| g + 1);
    if k == 0 || k > n_groups {
        return Err(Error::Selection(format!(
            "k = {k} must lie in [1, {n_groups}] (feature groups available)"
        )));
    }
    let forest = grow_forest(rows, labels, &config.forest)?;
    let all = surviving_groups(&forest, &vec![1.0; forest.trees.len()], groups);
    if all.len() < k {
        return Err(Error::Selection(format!(
            "the forest uses only {} feature groups, fewer than k = {k}; grow more trees (n_trees) or deeper ones",
            all.len()
        )));
    }
    let y: Vec<f64> = labels.iter().map(|&l| f64::from(u8::from(l))).collect();
    let gram = Gram::new(&forest.predictions, &y);
    let fit = bisect_lambda(&gram, config.bisection_steps, |w| {
        surviving_groups(&forest, w, groups).len() >= k
    })?;

    let mut scores = vec![0.0; d];
    let mut splits = vec![0usize; d];
    for (t, w) in fit.weights.iter().enumerate() {
        for (c, &u) in forest.usage[t].iter().enumerate() {
            scores[c] += w.abs() * u as f64;
            splits[c] += u;
        }
    }
    let mut group_score = vec![(0.0, 0usize); n_groups];
    for c in 0..d {
        group_score[groups[c]].0 += scores[c];
        group_score[groups[c]].1 += splits[c];
    }
    let mut candidates = surviving_groups(&forest, &fit.weights, groups);
    if candidates.len() < k {
        // the lambda = 0 solution may still zero some trees out
        candidates = all;
    }
    candidates.sort_by(|&a, &b| {
        group_score[b]
            .0
            .total_cmp(&group_score[a].0)
            .then(group_score[b].1.cmp(&group_score[a].1))
            .then(a.cmp(&b))
    });
    candidates.truncate(k);
    let selected: Vec<usize> = (0..d).filter(|c| candidates.contains(&groups[*c])).collect();
    log::info!(
        "selection: lambda={:.3e}, {} of {} trees kept, {} columns selected",
        fit.lambda,
        fit.weights.iter().filter(|w| **w != 0.0).count(),
        fit.weights.len(),
        selected.len()
    );
    Ok(SelectionResult {
        selected,
        tree_weights: fit.weights,
        lambda: fit.lambda,
        scores,
    })
}

/// Largest `lambda` (to bisection precision) whose solution satisfies `enough`.
fn bisect_lambda(gram: &Gram, steps: usize, enough: impl Fn(&[f64]) -> bool) -> Result<LassoFit> {
    let (mut lo, mut hi) = (0.0, gram.lambda_max());
    let mut lo_fit: Option<LassoFit> = None;
    let mut warm: Option<Vec<f64>> = None;
    for _ in 0..steps {
        let mid = 0.5 * (lo + hi);
        let fit = gram.solve(mid, warm.as_deref())?;
        if enough(&fit.weights) {
            lo = mid;
            warm = Some(fit.weights.clone());
            lo_fit = Some(fit);
        } else {
            hi = mid;
        }
    }
    match lo_fit {
        Some(f) => Ok(f),
        None => gram.solve(0.0, None),
    }
}

/// LASSO on the raw (centered) columns instead of tree predictions.
///
/// `tree_weights` of the result holds the per-column coefficients and `scores`
/// their absolute values. Groups are ranked by summed absolute coefficient.
pub fn select_linear(
    rows: &[Vec<f64>],
    labels: &[bool],
    groups: &[usize],
    k: usize,
    bisection_steps: usize,
) -> Result<SelectionResult> {
    let d = rows.first().map_or(0, Vec::len);
    if groups.len() != d || rows.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: groups.len(),
        });
    }
    let n_groups = groups.iter().max().map_or(0, |g| g + 1);
    if k == 0 || k > n_groups {
        return Err(Error::Selection(format!(
            "k = {k} must lie in [1, {n_groups}] (feature groups available)"
        )));
    }
    let m = rows.len() as f64;
    let columns: Vec<Vec<f64>> = (0..d)
        .map(|c| {
            let mean = rows.iter().map(|r| r[c]).sum::<f64>() / m;
            rows.iter().map(|r| r[c] - mean).collect()
        })
        .collect();
    let y: Vec<f64> = labels.iter().map(|&l| f64::from(u8::from(l))).collect();
    let gram = Gram::new(&columns, &y);
    let support = |w: &[f64]| {
        let mut g: Vec<usize> = (0..d).filter(|&c| w[c] != 0.0).map(|c| groups[c]).collect();
        g.sort_unstable();
        g.dedup();
        g
    };
    let fit = bisect_lambda(&gram, bisection_steps, |w| support(w).len() >= k)?;
    let scores: Vec<f64> = fit.weights.iter().map(|w| w.abs()).collect();
    let mut group_score = vec![0.0; n_groups];
    for c in 0..d {
        group_score[groups[c]] += scores[c];
    }
    let mut candidates: Vec<usize> = (0..n_groups).collect();
    candidates.sort_by(|&a, &b| group_score[b].total_cmp(&group_score[a]).then(a.cmp(&b)));
    candidates.truncate(k);
    let selected = (0..d).filter(|c| candidates.contains(&groups[*c])).collect();
    Ok(SelectionResult {
        selected,
        tree_weights: fit.weights,
        lambda: fit.lambda,
        scores,
    })
}

/// Binary proxy labels at a fixed horizon.
///
/// Records with an event at or before `horizon` are positives, records still
/// under observation after it are negatives, and records censored at or before
/// it are dropped.
pub fn fixed_horizon_labels(dataset: &SurvivalDataset, horizon: f64) -> Result<(Vec<usize>, Vec<bool>)> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
    }
    let (kept, labels): (Vec<usize>, Vec<bool>) = dataset
        .records()
        .iter()
        .enumerate()
        .filter_map(|(i, r)| {
            if r.time > horizon {
                Some((i, false))
            } else if r.event {
                Some((i, true))
            } else {
                None
            }
        })
        .unzip();
    if kept.is_empty() {
        return Err(Error::DegenerateDataset(format!(
            "every record is censored before the horizon {horizon}"
        )));
    }
    Ok((kept, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SurvivalRecord;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn horizon_labels() {
        let ds = SurvivalDataset::new(
            vec![
                SurvivalRecord::new(vec![0.0], 3.0, true),
                SurvivalRecord::new(vec![0.0], 7.0, false),
                SurvivalRecord::new(vec![0.0], 2.0, false),
                SurvivalRecord::new(vec![0.0], 9.0, true),
            ],
            vec!["x".into()],
        )
        .unwrap();
        let (kept, labels) = fixed_horizon_labels(&ds, 5.0).unwrap();
        assert_eq!(kept, vec![0, 1, 3]);
        assert_eq!(labels, vec![true, false, false]);
        assert!(fixed_horizon_labels(&ds, 0.0).is_err());
        let censored = SurvivalDataset::unchecked(
            vec![SurvivalRecord::new(vec![0.0], 1.0, false)],
            vec!["x".into()],
            vec![crate::data::FeatureKind::Continuous],
        );
        assert!(fixed_horizon_labels(&censored.unwrap(), 5.0).is_err());
    }

    fn indicator(n: usize) -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..6).map(|_| rng.random::<f64>() - 0.5).collect())
            .collect();
        let labels = rows.iter().map(|r| r[3] > 0.0).collect();
        (rows, labels)
    }

    #[test]
    fn k_one_on_indicator_picks_that_feature() {
        let (rows, labels) = indicator(500);
        let groups: Vec<usize> = (0..6).collect();
        let r = select_features(&rows, &labels, &groups, 1, &SelectConfig::default()).unwrap();
        assert_eq!(r.selected, vec![3]);
    }

    #[test]
    fn one_hot_groups_are_atomic() {
        let (rows, labels) = indicator(500);
        // columns 2 and 3 form one group
        let groups = vec![0, 1, 2, 2, 3, 4];
        let r = select_features(&rows, &labels, &groups, 1, &SelectConfig::default()).unwrap();
        assert_eq!(r.selected, vec![2, 3]);
    }

    #[test]
    fn linear_lasso_picks_the_signal_column() {
        let (rows, labels) = indicator(500);
        let groups: Vec<usize> = (0..6).collect();
        let r = select_linear(&rows, &labels, &groups, 1, 40).unwrap();
        assert_eq!(r.selected, vec![3]);
    }

    #[test]
    fn k_out_of_range() {
        let (rows, labels) = indicator(100);
        let groups: Vec<usize> = (0..6).collect();
        assert!(matches!(
            select_features(&rows, &labels, &groups, 7, &SelectConfig::default()),
            Err(Error::Selection(_))
        ));
        assert!(select_features(&rows, &labels, &groups, 0, &SelectConfig::default()).is_err());
    }
}
