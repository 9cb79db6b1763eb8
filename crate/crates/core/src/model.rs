//! Fitting and applying a complete survival model.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{fit_cox, fit_logistic, CoxConfig, LogisticConfig};
use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::gam::{bin_features, fit_gam, GamConfig};
use crate::persist::{Estimator, ModelFile};
use crate::prediction::{
    predict_survival_discrete, predict_survival_mc, survival_curves, EventRateCalibration,
    PredictionConfig, RateCalibrated,
};
use crate::stacking::{expected_size, stack, StackingConfig};
use crate::step::SurvivalCurve;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    #[default]
    Gam,
    Logistic,
    Cox,
}

impl std::str::FromStr for ModelChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gam" => Ok(Self::Gam),
            "logistic" => Ok(Self::Logistic),
            "cox" => Ok(Self::Cox),
            other => Err(Error::InvalidParameter(format!(
                "unknown model {other:?}; expected gam, logistic or cox"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct FitOptions {
    pub model: ModelChoice,
    pub stacking: StackingConfig,
    pub gam: GamConfig,
    pub logistic: LogisticConfig,
    pub cox: CoxConfig,
    /// Skip the event-rate calibration and treat classifier output as the hazard.
    pub raw_hazard: bool,
}

/// Row counts of the stacking stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StackingLog {
    pub rows: usize,
    pub positives: usize,
    pub expected_rows: f64,
}

/// Fits the chosen estimator on `train`. Classifiers are fit on stacked rows.
pub fn fit_model(train: &SurvivalDataset, options: &FitOptions) -> Result<(ModelFile, Option<StackingLog>)> {
    let event_times = train.distinct_event_times();
    let names = train.feature_names().to_vec();
    let gamma = options.stacking.gamma;
    if options.model == ModelChoice::Cox {
        log::info!("model=cox: stacking skipped");
        let cox = fit_cox(train, &options.cox)?;
        return Ok((ModelFile::new(Estimator::Cox(cox), names, gamma, event_times), None));
    }
    let stacked = stack(train, &options.stacking)?;
    let exp = expected_size(train, gamma);
    let expected_rows = exp.positives as f64 + exp.expected_negatives;
    let slog = StackingLog {
        rows: stacked.len(),
        positives: stacked.n_positive(),
        expected_rows,
    };
    log::info!(
        "stacked {} rows ({} positive); expected {:.1} +/- {:.1}",
        slog.rows,
        slog.positives,
        expected_rows,
        5.0 * exp.expected_negatives.sqrt()
    );
    let estimator = match options.model {
        ModelChoice::Gam => {
            let binned = bin_features(&stacked.rows, stacked.feature_names.clone(), options.gam.max_bins)?;
            Estimator::Gam(fit_gam(&binned, &stacked.labels, &options.gam)?)
        }
        ModelChoice::Logistic => Estimator::Logistic(fit_logistic(&stacked, &options.logistic)?),
        ModelChoice::Cox => unreachable!("handled above"),
    };
    let mut file = ModelFile::new(estimator, names, gamma, event_times);
    if !options.raw_hazard {
        file.calibration = Some(EventRateCalibration::fit(&file.event_times, gamma)?);
    }
    Ok((file, Some(slog)))
}

impl ModelFile {
    fn check_dims(&self, xs: &[Vec<f64>]) -> Result<()> {
        let d = self.feature_names.len();
        match xs.iter().find(|x| x.len() != d) {
            Some(x) => Err(Error::DimensionMismatch {
                expected: d,
                actual: x.len(),
            }),
            None => Ok(()),
        }
    }

    /// Survival curves on `config.grid`.
    ///
    /// Stacked classifiers integrate the (calibrated, when available) hazard by
    /// Monte Carlo; Cox models use the closed form.
    pub fn survival_curves(&self, xs: &[Vec<f64>], config: &PredictionConfig) -> Result<Vec<SurvivalCurve>> {
        self.check_dims(xs)?;
        match (&self.estimator, self.estimator.classifier(), &self.calibration) {
            (Estimator::Cox(cox), _, _) => {
                config.validate_grid()?;
                Ok(xs
                    .par_iter()
                    .map(|x| SurvivalCurve {
                        times: config.grid.clone(),
                        probabilities: config.grid.iter().map(|&t| cox.survival(x, t)).collect(),
                    })
                    .collect())
            }
            (_, Some(c), Some(cal)) => survival_curves(&RateCalibrated::new(c, cal), xs, config),
            (_, Some(c), None) => survival_curves(c, xs, config),
            (_, None, _) => unreachable!("every non-Cox estimator is a classifier"),
        }
    }

    /// Curves that integrate the raw classifier output as the hazard.
    pub fn raw_survival_curves(&self, xs: &[Vec<f64>], config: &PredictionConfig) -> Result<Vec<SurvivalCurve>> {
        self.check_dims(xs)?;
        match self.estimator.classifier() {
            Some(c) => survival_curves(c, xs, config),
            None => self.survival_curves(xs, config),
        }
    }

    /// `S(t|x)` from the exponential transform of the integrated hazard.
    pub fn survival_mc(&self, x: &[f64], t: f64, config: &PredictionConfig) -> Result<f64> {
        match (&self.estimator, self.estimator.classifier(), &self.calibration) {
            (Estimator::Cox(cox), _, _) => Ok(cox.survival(x, t)),
            (_, Some(c), Some(cal)) => predict_survival_mc(&RateCalibrated::new(c, cal), x, t, config),
            (_, Some(c), None) => predict_survival_mc(c, x, t, config),
            (_, None, _) => unreachable!("every non-Cox estimator is a classifier"),
        }
    }

    /// Product estimator over the training event times; `None` for Cox models.
    pub fn survival_discrete(&self, x: &[f64], t: f64) -> Option<f64> {
        self.estimator
            .classifier()
            .map(|c| predict_survival_discrete(c, x, t, &self.event_times))
    }

    /// Time-independent risk scores where the model has them (Cox: `x' beta`).
    pub fn static_risk(&self, xs: &[Vec<f64>]) -> Option<Vec<f64>> {
        match &self.estimator {
            Estimator::Cox(cox) => Some(xs.iter().map(|x| cox.risk_score(x)).collect()),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SyntheticSpec};

    #[test]
    fn cox_and_gam_paths() {
        let (ds, _) = generate(&SyntheticSpec { n: 400, ..SyntheticSpec::default() }).unwrap();
        let grid = vec![1.0, 2.0, 4.0];
        let cfg = PredictionConfig { grid, ..PredictionConfig::default() };
        let xs = ds.covariates();
        for model in [ModelChoice::Cox, ModelChoice::Gam, ModelChoice::Logistic] {
            let opts = FitOptions {
                model,
                stacking: StackingConfig { gamma: 0.2, seed: 1 },
                gam: GamConfig { max_rounds: 100, ..GamConfig::default() },
                ..FitOptions::default()
            };
            let (m, log) = fit_model(&ds, &opts).unwrap();
            assert_eq!(log.is_none(), model == ModelChoice::Cox);
            let curves = m.survival_curves(&xs[..5], &cfg).unwrap();
            assert!(curves.iter().all(SurvivalCurve::is_monotone));
            assert_eq!(m.survival_discrete(&xs[0], 2.0).is_none(), model == ModelChoice::Cox);
        }
    }

    #[test]
    fn model_choice_parses() {
        assert_eq!("cox".parse::<ModelChoice>().unwrap(), ModelChoice::Cox);
        assert!("rsf".parse::<ModelChoice>().is_err());
    }
}
