//! Time-dependent discrimination and calibration with censoring weights.
//!
//! Censoring weights come from the Kaplan–Meier estimate `G` of the censoring
//! distribution. Cases observed by `t` are weighted by `1 / G(T_i-)`, survivors
//! past `t` by `1 / G(t)`.

use serde::{Deserialize, Serialize};

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::km::{censoring_kaplan_meier, kaplan_meier};
use crate::step::{StepFunction, SurvivalCurve};

/// Number of points in [`default_grid`].
pub const DEFAULT_GRID_POINTS: usize = 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CensoringSource {
    #[default]
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AucAggregation {
    /// Weighted by the drops of the test-set Kaplan–Meier curve over the grid.
    #[default]
    EventWeighted,
    Plain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucResult {
    /// Grid times at which the AUC was defined.
    pub times: Vec<f64>,
    pub auc: Vec<f64>,
    pub mean_auc: f64,
}

fn censoring_weights(train: &SurvivalDataset, test: &SurvivalDataset, source: CensoringSource) -> StepFunction {
    match source {
        CensoringSource::Train => censoring_kaplan_meier(train),
        CensoringSource::Test => censoring_kaplan_meier(test),
    }
}

/// Weighted probability that a case outranks a control; ties count one half.
fn weighted_auc(case_scores: &[(f64, f64)], control_scores: &mut [f64]) -> f64 {
    control_scores.sort_by(f64::total_cmp);
    let m = control_scores.len() as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for &(s, w) in case_scores {
        let below = control_scores.partition_point(|&c| c < s) as f64;
        let tied = control_scores.partition_point(|&c| c <= s) as f64 - below;
        num += w * (below + 0.5 * tied);
        den += w * m;
    }
    num / den
}

/// Cumulative/dynamic AUC of risk scores (higher means riskier).
///
/// `scores[k][i]` is the score of test record `i` at `times[k]`; pass a single
/// row to use the same scores at every time. Times with no cases or no controls
/// are dropped with a warning.
pub fn cumulative_dynamic_auc(
    train: &SurvivalDataset,
    test: &SurvivalDataset,
    scores: &[Vec<f64>],
    times: &[f64],
    censoring: CensoringSource,
    aggregation: AucAggregation,
) -> Result<AucResult> {
    let n = test.len();
    if scores.len() != 1 && scores.len() != times.len() {
        return Err(Error::DimensionMismatch {
            expected: times.len(),
            actual: scores.len(),
        });
    }
    if let Some(s) = scores.iter().find(|s| s.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: s.len(),
        });
    }
    if scores.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("risk scores".into()));
    }
    let g = censoring_weights(train, test, censoring);
    let recs = test.records();
    let mut kept_times = Vec::new();
    let mut auc = Vec::new();
    for (k, &t) in times.iter().enumerate() {
        let s = if scores.len() == 1 { &scores[0] } else { &scores[k] };
        let mut cases = Vec::new();
        let mut controls = Vec::new();
        for (i, r) in recs.iter().enumerate() {
            if r.time <= t && r.event {
                let gi = g.eval_left(r.time);
                if gi <= 0.0 {
                    return Err(Error::ZeroCensoringWeight { time: r.time });
                }
                cases.push((s[i], 1.0 / gi));
            } else if r.time > t {
                controls.push(s[i]);
            }
        }
        if cases.is_empty() || controls.is_empty() {
            log::warn!("AUC undefined at t={t}: {} cases, {} controls; time skipped", cases.len(), controls.len());
            continue;
        }
        kept_times.push(t);
        auc.push(weighted_auc(&cases, &mut controls));
    }
    if auc.is_empty() {
        return Err(Error::NoValidTimes);
    }
    let mean_auc = match aggregation {
        AucAggregation::Plain => auc.iter().sum::<f64>() / auc.len() as f64,
        AucAggregation::EventWeighted => {
            let km = kaplan_meier(test);
            let mut prev = 1.0;
            let mut num = 0.0;
            for (&t, &a) in kept_times.iter().zip(&auc) {
                let s = km.eval(t);
                num += a * (prev - s);
                prev = s;
            }
            let mass = 1.0 - prev;
            if mass > 0.0 {
                num / mass
            } else {
                auc.iter().sum::<f64>() / auc.len() as f64
            }
        }
    };
    Ok(AucResult {
        times: kept_times,
        auc,
        mean_auc,
    })
}

/// Censoring-weighted Brier score of survival predictions at `t`.
pub fn brier_score(
    train: &SurvivalDataset,
    test: &SurvivalDataset,
    predicted_survival: &[f64],
    t: f64,
    censoring: CensoringSource,
) -> Result<f64> {
    let g = censoring_weights(train, test, censoring);
    brier_with(&g, test, predicted_survival, t)
}

fn brier_with(g: &StepFunction, test: &SurvivalDataset, predicted: &[f64], t: f64) -> Result<f64> {
    if predicted.len() != test.len() {
        return Err(Error::DimensionMismatch {
            expected: test.len(),
            actual: predicted.len(),
        });
    }
    if predicted.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidParameter("survival predictions must lie in [0, 1]".into()));
    }
    let g_t = g.eval(t);
    let mut total = 0.0;
    for (r, &s) in test.records().iter().zip(predicted) {
        if r.time <= t && r.event {
            let gi = g.eval_left(r.time);
            if gi <= 0.0 {
                return Err(Error::ZeroCensoringWeight { time: r.time });
            }
            total += s * s / gi;
        } else if r.time > t {
            if g_t <= 0.0 {
                return Err(Error::ZeroCensoringWeight { time: t });
            }
            total += (1.0 - s) * (1.0 - s) / g_t;
        }
    }
    Ok(total / test.len() as f64)
}

/// Trapezoidal integral of `values` over `times`, divided by the range length.
pub fn trapezoid_mean(times: &[f64], values: &[f64]) -> Result<f64> {
    if times.len() != values.len() {
        return Err(Error::DimensionMismatch {
            expected: times.len(),
            actual: values.len(),
        });
    }
    let (Some(&first), Some(&last)) = (times.first(), times.last()) else {
        return Err(Error::InvalidParameter("empty integration range".into()));
    };
    let span = last - first;
    if !(span > 0.0) {
        return Err(Error::InvalidParameter("integration range has zero length".into()));
    }
    let area: f64 = times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum();
    Ok(area / span)
}

/// Brier scores at `times` and their normalized trapezoidal integral.
pub fn integrated_brier(
    train: &SurvivalDataset,
    test: &SurvivalDataset,
    curves: &[SurvivalCurve],
    times: &[f64],
    censoring: CensoringSource,
) -> Result<(Vec<f64>, f64)> {
    if curves.len() != test.len() {
        return Err(Error::DimensionMismatch {
            expected: test.len(),
            actual: curves.len(),
        });
    }
    let g = censoring_weights(train, test, censoring);
    let per_time = times
        .iter()
        .map(|&t| {
            let pred: Vec<f64> = curves.iter().map(|c| c.at(t)).collect();
            brier_with(&g, test, &pred, t)
        })
        .collect::<Result<Vec<f64>>>()?;
    let ibs = trapezoid_mean(times, &per_time)?;
    Ok((per_time, ibs))
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `points` equally spaced times from the 10th to the 90th percentile of the
/// observed test event times.
pub fn default_grid(test: &SurvivalDataset, points: usize) -> Result<Vec<f64>> {
    let mut ev: Vec<f64> = test.records().iter().filter(|r| r.event).map(|r| r.time).collect();
    if ev.len() < 2 || points < 2 {
        return Err(Error::NoValidTimes);
    }
    ev.sort_by(f64::total_cmp);
    let lo = quantile(&ev, 0.1);
    let hi = quantile(&ev, 0.9);
    if !(hi > lo) {
        return Err(Error::NoValidTimes);
    }
    let step = (hi - lo) / (points - 1) as f64;
    Ok((0..points).map(|i| lo + step * i as f64).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub grid: Vec<f64>,
    /// Times at which the AUC was defined, with their values.
    pub auc_times: Vec<f64>,
    pub auc: Vec<f64>,
    pub mean_auc: f64,
    pub brier: Vec<f64>,
    pub integrated_brier: f64,
    pub censoring: CensoringSource,
    pub aggregation: AucAggregation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct EvalOptions {
    pub censoring: CensoringSource,
    pub aggregation: AucAggregation,
}

/// Scores survival curves on `grid`.
///
/// With `risk = None` the AUC at each time ranks records by `1 - S(t|x)` read
/// off their curves; otherwise the given time-independent risk scores are used.
pub fn evaluate(
    train: &SurvivalDataset,
    test: &SurvivalDataset,
    curves: &[SurvivalCurve],
    risk: Option<&[f64]>,
    grid: &[f64],
    options: EvalOptions,
) -> Result<EvaluationReport> {
    let scores: Vec<Vec<f64>> = match risk {
        Some(r) => vec![r.to_vec()],
        None => grid
            .iter()
            .map(|&t| curves.iter().map(|c| 1.0 - c.at(t)).collect())
            .collect(),
    };
    let auc = cumulative_dynamic_auc(train, test, &scores, grid, options.censoring, options.aggregation)?;
    let (brier, ibs) = integrated_brier(train, test, curves, grid, options.censoring)?;
    Ok(EvaluationReport {
        grid: grid.to_vec(),
        auc_times: auc.times,
        auc: auc.auc,
        mean_auc: auc.mean_auc,
        brier,
        integrated_brier: ibs,
        censoring: options.censoring,
        aggregation: options.aggregation,
    })
}

impl EvaluationReport {
    /// Plain text: summary lines, a blank line, then `time<TAB>auc<TAB>brier` rows
    /// (`NA` where the AUC is undefined).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("mean_auc\t{}\n", self.mean_auc));
        out.push_str(&format!("integrated_brier\t{}\n", self.integrated_brier));
        out.push_str(&format!("censoring_weights\t{:?}\n", self.censoring).to_lowercase());
        out.push_str(&format!(
            "auc_aggregation\t{}\n",
            match self.aggregation {
                AucAggregation::EventWeighted => "event_weighted",
                AucAggregation::Plain => "plain",
            }
        ));
        out.push_str("\ntime\tauc\tbrier\n");
        for (t, b) in self.grid.iter().zip(&self.brier) {
            let a = self
                .auc_times
                .iter()
                .position(|s| s == t)
                .map_or_else(|| "NA".to_string(), |k| format!("{}", self.auc[k]));
            out.push_str(&format!("{t}\t{a}\t{b}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SurvivalRecord;
    use proptest::prelude::*;

    fn uncensored(times: &[f64]) -> SurvivalDataset {
        SurvivalDataset::new(
            times.iter().map(|&t| SurvivalRecord::new(vec![0.0], t, true)).collect(),
            vec!["x".into()],
        )
        .unwrap()
    }

    fn auc_at(ds: &SurvivalDataset, scores: &[f64], t: f64) -> f64 {
        cumulative_dynamic_auc(ds, ds, &[scores.to_vec()], &[t], CensoringSource::Train, AucAggregation::EventWeighted)
            .unwrap()
            .auc[0]
    }

    #[test]
    fn four_record_hand_example() {
        let ds = uncensored(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(auc_at(&ds, &[3.0, 4.0, 1.0, 2.0], 2.5), 1.0);
    }

    #[test]
    fn perfect_and_constant_scores() {
        let times: Vec<f64> = (1..=30).map(f64::from).collect();
        let ds = uncensored(&times);
        let neg: Vec<f64> = times.iter().map(|t| -t).collect();
        let grid = default_grid(&ds, 21).unwrap();
        let r = cumulative_dynamic_auc(&ds, &ds, &[neg], &grid, CensoringSource::Train, AucAggregation::EventWeighted).unwrap();
        assert!(r.auc.iter().all(|&a| a == 1.0));
        assert_eq!(r.mean_auc, 1.0);
        let r = cumulative_dynamic_auc(&ds, &ds, &[vec![0.7; 30]], &grid, CensoringSource::Train, AucAggregation::Plain).unwrap();
        assert!(r.auc.iter().all(|&a| a == 0.5));
    }

    #[test]
    fn undefined_times_error() {
        let ds = uncensored(&[1.0, 2.0]);
        assert!(matches!(
            cumulative_dynamic_auc(&ds, &ds, &[vec![0.0, 1.0]], &[5.0], CensoringSource::Train, AucAggregation::Plain),
            Err(Error::NoValidTimes)
        ));
    }

    #[test]
    fn brier_examples() {
        let ds = uncensored(&[1.0, 2.0, 3.0]);
        let b = brier_score(&ds, &ds, &[0.2, 0.8, 0.6], 1.5, CensoringSource::Train).unwrap();
        assert!((b - 0.08).abs() < 1e-15);
        let b = brier_score(&ds, &ds, &[0.5; 3], 1.5, CensoringSource::Train).unwrap();
        assert_eq!(b, 0.25);
        let oracle: Vec<f64> = [1.0, 2.0, 3.0].iter().map(|&t| f64::from(u8::from(t > 1.5))).collect();
        assert_eq!(brier_score(&ds, &ds, &oracle, 1.5, CensoringSource::Train).unwrap(), 0.0);
    }

    #[test]
    fn zero_censoring_weight_is_reported() {
        let ds = SurvivalDataset::new(
            vec![
                SurvivalRecord::new(vec![0.0], 1.0, true),
                SurvivalRecord::new(vec![0.0], 2.0, false),
            ],
            vec!["x".into()],
        )
        .unwrap();
        assert!(brier_score(&ds, &ds, &[0.5, 0.5], 1.0, CensoringSource::Train).is_ok());
        assert!(brier_score(&ds, &ds, &[0.5, 0.5], 2.5, CensoringSource::Train).is_ok());
        let late = SurvivalDataset::new(
            vec![
                SurvivalRecord::new(vec![0.0], 1.0, false),
                SurvivalRecord::new(vec![0.0], 3.0, true),
            ],
            vec!["x".into()],
        )
        .unwrap();
        let train = SurvivalDataset::new(
            vec![
                SurvivalRecord::new(vec![0.0], 0.5, true),
                SurvivalRecord::new(vec![0.0], 1.0, false),
            ],
            vec!["x".into()],
        )
        .unwrap();
        assert!(matches!(
            brier_score(&train, &late, &[0.5, 0.5], 2.0, CensoringSource::Train),
            Err(Error::ZeroCensoringWeight { .. })
        ));
    }

    #[test]
    fn trapezoid_examples() {
        assert_eq!(trapezoid_mean(&[0.0, 5.0], &[0.0, 0.2]).unwrap(), 0.1);
        assert!((trapezoid_mean(&[1.0, 2.0, 4.0], &[0.3; 3]).unwrap() - 0.3).abs() < 1e-15);
        assert!(trapezoid_mean(&[2.0, 2.0], &[0.1, 0.1]).is_err());
    }

    #[test]
    fn grid_spans_event_percentiles() {
        let times: Vec<f64> = (0..=100).map(f64::from).collect();
        let ds = uncensored(&times);
        let g = default_grid(&ds, 21).unwrap();
        assert_eq!(g.len(), 21);
        assert!((g[0] - 10.0).abs() < 1e-12 && (g[20] - 90.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn auc_invariant_to_monotone_transform_and_flips_on_negation(
            data in proptest::collection::vec((0.1f64..10.0, any::<bool>(), -3.0f64..3.0), 6..30)
        ) {
            let mut recs: Vec<SurvivalRecord> = data.iter().map(|(t, e, _)| SurvivalRecord::new(vec![0.0], *t, *e)).collect();
            recs[0].event = true;
            let ds = SurvivalDataset::new(recs, vec!["x".into()]).unwrap();
            let s: Vec<f64> = data.iter().map(|d| d.2).collect();
            let t = {
                let mut ts: Vec<f64> = data.iter().map(|d| d.0).collect();
                ts.sort_by(f64::total_cmp);
                ts[ts.len() / 2]
            };
            let run = |sc: Vec<f64>| cumulative_dynamic_auc(&ds, &ds, &[sc], &[t], CensoringSource::Train, AucAggregation::Plain);
            if let Ok(base) = run(s.clone()) {
                let tr = run(s.iter().map(|v| v.exp() * 3.0 + 1.0).collect()).unwrap();
                prop_assert!((base.auc[0] - tr.auc[0]).abs() < 1e-12);
                let neg = run(s.iter().map(|v| -v).collect()).unwrap();
                prop_assert!((base.auc[0] + neg.auc[0] - 1.0).abs() < 1e-12);
            }
        }
    }
}
