use proptest::prelude::*;
use survstack::km::kaplan_meier;
use survstack::prediction::{predict_survival_discrete, survival_curve, Sampling};
use survstack::stacking::expected_size;
use survstack::{bin_features, fit_gam, stack, GamConfig, PredictionConfig, StackingConfig, SurvivalDataset, SurvivalRecord};

fn dataset() -> impl Strategy<Value = SurvivalDataset> {
    prop::collection::vec((-2.0..2.0f64, 1u32..8, any::<bool>()), 2..40).prop_map(|rows| {
        let mut records: Vec<SurvivalRecord> = rows
            .into_iter()
            .map(|(x, t, e)| SurvivalRecord::new(vec![x], f64::from(t), e))
            .collect();
        records[0].event = true;
        SurvivalDataset::new(records, vec!["x".into()]).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stacking_counts(ds in dataset(), gamma in 0.05..1.0f64, seed in any::<u64>()) {
        let st = stack(&ds, &StackingConfig { gamma, seed }).unwrap();
        prop_assert_eq!(st.n_positive(), ds.n_events());
        let full = stack(&ds, &StackingConfig { gamma: 1.0, seed }).unwrap();
        let exp = expected_size(&ds, 1.0);
        prop_assert_eq!(full.len() as f64, exp.positives as f64 + exp.expected_negatives);
        // every subsampled negative is a row of the full expansion
        for (p, &l) in st.provenance.iter().zip(&st.labels) {
            let r = &ds.records()[p.source];
            if l {
                prop_assert!(r.event && r.time == p.risk_time);
            } else {
                prop_assert!(r.time > p.risk_time);
            }
        }
    }

    #[test]
    fn curves_are_survival_functions(
        a in 0.0..0.5f64,
        b in -0.2..0.2f64,
        grid in prop::collection::btree_set(1u32..200, 1..12),
        seed in any::<u64>(),
        uniform in any::<bool>(),
    ) {
        let grid: Vec<f64> = grid.into_iter().map(|g| f64::from(g) / 10.0).collect();
        let hazard = move |z: &[f64]| (a + b * z[1]).clamp(0.0, 1.0);
        let sampling = if uniform { Sampling::Uniform } else { Sampling::Stratified };
        let cfg = PredictionConfig { n_mc: 16, seed, grid, sampling };
        let c = survival_curve(&hazard, &[0.3], &cfg).unwrap();
        prop_assert!(c.is_monotone());
        prop_assert!(c.probabilities.iter().all(|&s| (0.0..=1.0).contains(&s)));
    }

    #[test]
    fn constant_hazard_integrates_exactly(rate in 0.0..0.9f64, t in 0.1..20.0f64, seed in any::<u64>()) {
        let hazard = move |_: &[f64]| rate;
        let cfg = PredictionConfig { n_mc: 8, seed, grid: vec![t], ..PredictionConfig::default() };
        let s = survival_curve(&hazard, &[], &cfg).unwrap().probabilities[0];
        prop_assert!((s - (-rate * t).exp()).abs() < 1e-12);
    }

    #[test]
    fn discrete_product_is_monotone(p in 0.0..1.0f64, times in prop::collection::btree_set(1u32..100, 1..20)) {
        let times: Vec<f64> = times.into_iter().map(f64::from).collect();
        let f = move |_: &[f64]| p;
        let mut last = 1.0;
        for &t in &times {
            let s = predict_survival_discrete(&f, &[], t, &times);
            prop_assert!(s <= last + 1e-15);
            last = s;
        }
    }

    #[test]
    fn km_is_a_survival_function(ds in dataset()) {
        let km = kaplan_meier(&ds);
        let mut last = 1.0;
        for t in 0..10 {
            let s = km.eval(f64::from(t));
            prop_assert!((0.0..=1.0).contains(&s) && s <= last + 1e-15);
            last = s;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn gam_score_is_intercept_plus_terms(seed in any::<u64>(), n in 200usize..400) {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let u = ((i as u64).wrapping_mul(2654435761).wrapping_add(seed) % 1000) as f64 / 1000.0;
                vec![u, (u * 7.0).sin(), (i % 5) as f64]
            })
            .collect();
        let labels: Vec<bool> = rows.iter().map(|r| r[0] + 0.3 * r[1] > 0.55).collect();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let binned = bin_features(&rows, vec!["a".into(), "b".into(), "c".into()], 16).unwrap();
        let cfg = GamConfig { max_rounds: 60, n_interactions: 2, seed, ..GamConfig::default() };
        let gam = fit_gam(&binned, &labels, &cfg).unwrap();
        for r in rows.iter().take(50) {
            let sum = gam.term_contributions(r).unwrap().into_iter().fold(gam.intercept, |a, c| a + c);
            prop_assert_eq!(sum, gam.score(r).unwrap());
        }
        for h in [&gam.meta.main_loss_history, &gam.meta.interaction_loss_history] {
            prop_assert!(h.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        }
    }
}
