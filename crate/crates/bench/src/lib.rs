//! Fixtures shared by the benchmarks in `benches/`.

use survstack::metrics::default_grid;
use survstack::synth::{generate, SyntheticSpec};
use survstack::{FitOptions, GamConfig, ModelFile, StackingConfig, SurvivalDataset};

/// Proportional-hazards data with `d` features (first two informative).
pub fn dataset(n: usize, d: usize, seed: u64) -> SurvivalDataset {
    let mut beta = vec![0.0; d];
    beta[0] = 1.0;
    if d > 1 {
        beta[1] = -0.5;
    }
    let spec = SyntheticSpec {
        n,
        d,
        hazard: survstack::synth::HazardForm::Proportional { beta },
        seed,
        ..SyntheticSpec::default()
    };
    generate(&spec).expect("valid benchmark spec").0
}

/// A GAM fit with a capped number of rounds, for prediction benchmarks.
pub fn small_gam(ds: &SurvivalDataset) -> ModelFile {
    let opts = FitOptions {
        stacking: StackingConfig { gamma: 0.05, seed: 1 },
        gam: GamConfig { max_rounds: 200, n_interactions: 4, ..GamConfig::default() },
        ..FitOptions::default()
    };
    survstack::fit_model(ds, &opts).expect("benchmark fit").0
}

pub fn grid(ds: &SurvivalDataset) -> Vec<f64> {
    default_grid(ds, 21).expect("benchmark grid")
}
