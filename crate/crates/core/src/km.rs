//! Nonparametric estimators: Kaplan–Meier for events and for censoring, Nelson–Aalen.

use crate::data::SurvivalDataset;
use crate::step::StepFunction;

/// Distinct times with `(time, flagged count, at-risk count)` where at-risk is `#{T_j >= t}`.
///
/// Records with an unflagged time equal to a flagged one stay in the risk set for that time.
fn flagged_risk_table(times: &[f64], flags: &[bool]) -> Vec<(f64, usize, usize)> {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let n = times.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let t = times[order[i]];
        let at_risk = n - i;
        let mut flagged = 0;
        let mut j = i;
        while j < n && times[order[j]] == t {
            flagged += usize::from(flags[order[j]]);
            j += 1;
        }
        if flagged > 0 {
            out.push((t, flagged, at_risk));
        }
        i = j;
    }
    out
}

fn product_limit(times: &[f64], flags: &[bool]) -> StepFunction {
    let table = flagged_risk_table(times, flags);
    let mut s = 1.0;
    let mut knots = Vec::with_capacity(table.len());
    let mut values = Vec::with_capacity(table.len());
    for (t, d, n) in table {
        s *= 1.0 - d as f64 / n as f64;
        knots.push(t);
        values.push(s);
    }
    StepFunction::new(knots, values, 1.0).expect("distinct sorted knots")
}

/// Product-limit estimate of the event-free survival function.
pub fn kaplan_meier(dataset: &SurvivalDataset) -> StepFunction {
    product_limit(&dataset.times(), &dataset.events())
}

/// Kaplan–Meier estimate of the censoring survival function `G(t)`.
///
/// Censorings play the role of events (the indicator is flipped).
pub fn censoring_kaplan_meier(dataset: &SurvivalDataset) -> StepFunction {
    let flipped: Vec<bool> = dataset.events().iter().map(|e| !e).collect();
    product_limit(&dataset.times(), &flipped)
}

/// Nelson–Aalen cumulative hazard `sum_{t_i <= t} d_i / n_i`.
pub fn nelson_aalen(dataset: &SurvivalDataset) -> StepFunction {
    let table = flagged_risk_table(&dataset.times(), &dataset.events());
    let mut h = 0.0;
    let mut knots = Vec::with_capacity(table.len());
    let mut values = Vec::with_capacity(table.len());
    for (t, d, n) in table {
        h += d as f64 / n as f64;
        knots.push(t);
        values.push(h);
    }
    StepFunction::new(knots, values, 0.0).expect("distinct sorted knots")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{SurvivalRecord, SurvivalDataset};
    use proptest::prelude::*;

    fn ds(times: &[f64], events: &[bool]) -> SurvivalDataset {
        SurvivalDataset::unchecked(
            times
                .iter()
                .zip(events)
                .map(|(&t, &e)| SurvivalRecord::new(vec![], t, e))
                .collect(),
            vec![],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn km_hand_example() {
        let km = kaplan_meier(&ds(&[1.0, 2.0, 3.0], &[true, false, true]));
        assert_eq!(km.eval(0.5), 1.0);
        assert!((km.eval(1.0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((km.eval(2.5) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(km.eval(3.0), 0.0);
        assert_eq!(km.eval(10.0), 0.0);
    }

    #[test]
    fn km_all_censored_is_one() {
        let km = kaplan_meier(&ds(&[1.0, 2.0, 3.0], &[false, false, false]));
        assert!(km.knots().is_empty());
        assert_eq!(km.eval(5.0), 1.0);
    }

    #[test]
    fn km_all_events_at_one() {
        let km = kaplan_meier(&ds(&[1.0; 4], &[true; 4]));
        assert_eq!(km.eval(0.99), 1.0);
        assert_eq!(km.eval(1.0), 0.0);
    }

    #[test]
    fn censoring_km_examples() {
        let g = censoring_kaplan_meier(&ds(&[1.0, 2.0, 3.0], &[true, false, true]));
        assert_eq!(g.eval(1.9), 1.0);
        assert_eq!(g.eval(2.0), 0.5);
        assert_eq!(g.eval(7.0), 0.5);

        let g = censoring_kaplan_meier(&ds(&[1.0, 2.0], &[true, true]));
        assert_eq!(g.eval(3.0), 1.0);

        let g = censoring_kaplan_meier(&ds(&[5.0, 5.0, 5.0], &[false; 3]));
        assert_eq!(g.eval(4.9), 1.0);
        assert_eq!(g.eval(5.0), 0.0);
    }

    #[test]
    fn tied_censoring_stays_at_risk() {
        // event and censoring at t = 1: both count in the denominator
        let km = kaplan_meier(&ds(&[1.0, 1.0, 2.0], &[true, false, true]));
        assert!((km.eval(1.0) - 2.0 / 3.0).abs() < 1e-15);
    }

    fn dataset_strategy(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        prop::collection::vec((1u32..20, any::<bool>()), 1..max).prop_map(|v| {
            v.into_iter()
                .map(|(t, e)| (f64::from(t) * 0.5, e))
                .unzip()
        })
    }

    proptest! {
        #[test]
        fn km_order_invariant((times, events) in dataset_strategy(40), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut idx: Vec<usize> = (0..times.len()).collect();
            idx.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let t2: Vec<f64> = idx.iter().map(|&i| times[i]).collect();
            let e2: Vec<bool> = idx.iter().map(|&i| events[i]).collect();
            prop_assert_eq!(kaplan_meier(&ds(&times, &events)), kaplan_meier(&ds(&t2, &e2)));
        }

        #[test]
        fn km_uncensored_is_empirical(times in prop::collection::vec(1u32..30, 1..50)) {
            let times: Vec<f64> = times.into_iter().map(f64::from).collect();
            let km = kaplan_meier(&ds(&times, &vec![true; times.len()]));
            for t in 0..32 {
                let t = f64::from(t);
                let emp = times.iter().filter(|&&x| x > t).count() as f64 / times.len() as f64;
                prop_assert!((km.eval(t) - emp).abs() < 1e-12);
            }
        }

        #[test]
        fn km_and_g_bounded_monotone((times, events) in dataset_strategy(40)) {
            let d = ds(&times, &events);
            for f in [kaplan_meier(&d), censoring_kaplan_meier(&d)] {
                let mut prev = 1.0;
                for k in 0..50 {
                    let v = f.eval(f64::from(k) * 0.25);
                    prop_assert!((0.0..=1.0).contains(&v));
                    prop_assert!(v <= prev);
                    prev = v;
                }
            }
        }

        #[test]
        fn risk_sets_nested((times, events) in dataset_strategy(30), a in 0.0f64..10.0, b in 0.0f64..10.0) {
            let d = ds(&times, &events);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let small = crate::data::risk_set(&d, hi);
            let big = crate::data::risk_set(&d, lo);
            prop_assert!(small.iter().all(|i| big.contains(i)));
        }
    }
}
