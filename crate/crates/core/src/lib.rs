//! Survival analysis through survival stacking.
//!
//! Time-to-event data are expanded into binary classification rows over risk
//! sets ([`stacking`]); a classifier fit to those rows, such as the boosted
//! additive model in [`gam`], estimates the hazard; survival curves come from
//! Monte Carlo integration of that hazard ([`prediction`]). Cox and
//! Kaplan–Meier baselines, tree-forest feature selection, IPCW metrics and
//! synthetic data with known hazards round out the toolkit.

// `!(x > 0.0)` style checks deliberately reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod data;
pub mod error;
pub mod gam;
pub mod io;
pub mod km;
pub mod metrics;
pub mod model;
pub mod persist;
pub mod prediction;
pub mod preprocess;
pub mod select;
pub mod stacking;
pub mod step;
pub mod synth;

pub use baselines::{fit_cox, fit_logistic, CoxConfig, CoxModel, LogisticConfig, LogisticModel};
pub use data::{FeatureKind, SurvivalDataset, SurvivalRecord};
pub use error::{Error, Result};
pub use gam::{bin_features, fit_gam, BinnedMatrix, GamConfig, GamModel};
pub use metrics::{AucAggregation, CensoringSource, EvaluationReport};
pub use model::{fit_model, FitOptions, ModelChoice};
pub use persist::{Estimator, ModelFile};
pub use prediction::{EventRateCalibration, HazardClassifier, HazardRate, PredictionConfig, RateCalibrated};
pub use select::{select_features, select_linear, SelectConfig, SelectionResult};
pub use stacking::{stack, StackedDataset, StackingConfig};
pub use step::{StepFunction, SurvivalCurve};
pub use synth::{generate, SyntheticSpec, TruthOracle};
