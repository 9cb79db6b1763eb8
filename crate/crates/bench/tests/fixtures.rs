use survstack_bench::{dataset, grid, small_gam};

#[test]
fn fixtures_are_usable() {
    let ds = dataset(400, 3, 1);
    assert_eq!(ds.len(), 400);
    assert_eq!(ds.n_features(), 3);
    let g = grid(&ds);
    assert_eq!(g.len(), 21);
    let model = small_gam(&ds);
    let pc = survstack::PredictionConfig { grid: g, ..survstack::PredictionConfig::default() };
    let curves = model.survival_curves(&ds.covariates()[..3], &pc).unwrap();
    assert!(curves.iter().all(|c| c.is_monotone()));
}
