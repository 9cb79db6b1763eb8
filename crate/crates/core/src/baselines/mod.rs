//! Cox proportional hazards and logistic regression on stacked rows.

mod cox;
mod logistic;

pub use cox::{
    breslow_baseline, cox_risk_score, cox_survival, fit_cox, log_partial_likelihood,
    partial_likelihood_gradient, CoxConfig, CoxModel,
};
pub use logistic::{fit_logistic, fit_logistic_rows, LogisticConfig, LogisticModel};
