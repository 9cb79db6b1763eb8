use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::step::StepFunction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoxConfig {
    /// Coefficient of `(ridge / 2) ||beta||^2` subtracted from the log partial likelihood.
    pub ridge: f64,
    pub max_iter: usize,
    /// Convergence threshold on the infinity norm of the per-record gradient.
    pub tol: f64,
    /// `||beta||_inf` beyond which the fit is declared separated.
    pub divergence_bound: f64,
}

impl Default for CoxConfig {
    fn default() -> Self {
        Self {
            ridge: 1e-6,
            max_iter: 100,
            tol: 1e-9,
            divergence_bound: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxModel {
    pub feature_names: Vec<String>,
    pub beta: Vec<f64>,
    /// Breslow estimate of the baseline cumulative hazard.
    pub baseline_cumhaz: StepFunction,
    pub ridge: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub log_likelihood: f64,
}

/// Sums over the risk set needed by the Breslow partial likelihood.
struct Derivatives {
    value: f64,
    gradient: DVector<f64>,
    /// Negative Hessian.
    information: DMatrix<f64>,
}

fn linear_predictor(dataset: &SurvivalDataset, beta: &[f64]) -> Vec<f64> {
    dataset
        .records()
        .iter()
        .map(|r| r.covariates.iter().zip(beta).map(|(x, b)| x * b).sum())
        .collect()
}

/// Indices grouped by tied time, latest time first.
fn descending_time_groups(dataset: &SurvivalDataset) -> Vec<Vec<usize>> {
    let recs = dataset.records();
    let mut order: Vec<usize> = (0..recs.len()).collect();
    order.sort_by(|&a, &b| recs[b].time.total_cmp(&recs[a].time).then(a.cmp(&b)));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some(g) if recs[g[0]].time == recs[i].time => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

fn derivatives(dataset: &SurvivalDataset, beta: &[f64], second_order: bool) -> Derivatives {
    let d = beta.len();
    let recs = dataset.records();
    let eta = linear_predictor(dataset, beta);
    let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shift = if shift.is_finite() { shift } else { 0.0 };
    let mut s0 = 0.0;
    let mut s1 = DVector::<f64>::zeros(d);
    let mut s2 = DMatrix::<f64>::zeros(d, d);
    let mut value = 0.0;
    let mut gradient = DVector::<f64>::zeros(d);
    let mut information = DMatrix::<f64>::zeros(d, d);
    for group in descending_time_groups(dataset) {
        for &i in &group {
            let w = (eta[i] - shift).exp();
            let x = DVector::from_column_slice(&recs[i].covariates);
            s0 += w;
            s1.axpy(w, &x, 1.0);
            if second_order {
                s2.ger(w, &x, &x, 1.0);
            }
        }
        let events: Vec<usize> = group.iter().copied().filter(|&i| recs[i].event).collect();
        if events.is_empty() {
            continue;
        }
        let m = events.len() as f64;
        let mean = &s1 / s0;
        for &i in &events {
            value += eta[i];
            for (g, x) in gradient.iter_mut().zip(&recs[i].covariates) {
                *g += x;
            }
        }
        value -= m * (s0.ln() + shift);
        gradient.axpy(-m, &mean, 1.0);
        if second_order {
            let cov = &s2 / s0 - &mean * mean.transpose();
            information += cov * m;
        }
    }
    Derivatives {
        value,
        gradient,
        information,
    }
}

/// Breslow log partial likelihood (no penalty).
pub fn log_partial_likelihood(dataset: &SurvivalDataset, beta: &[f64]) -> f64 {
    derivatives(dataset, beta, false).value
}

/// Gradient of [`log_partial_likelihood`].
pub fn partial_likelihood_gradient(dataset: &SurvivalDataset, beta: &[f64]) -> Vec<f64> {
    derivatives(dataset, beta, false).gradient.iter().copied().collect()
}

/// `Lambda_0(t) = sum_{t_i <= t} d_i / sum_{j in R(t_i)} exp(x_j' beta)`.
pub fn breslow_baseline(dataset: &SurvivalDataset, beta: &[f64]) -> StepFunction {
    let recs = dataset.records();
    let eta = linear_predictor(dataset, beta);
    let mut knots = Vec::new();
    let mut increments = Vec::new();
    let mut s0 = 0.0;
    for group in descending_time_groups(dataset) {
        for &i in &group {
            s0 += eta[i].exp();
        }
        let m = group.iter().filter(|&&i| recs[i].event).count();
        if m > 0 {
            knots.push(recs[group[0]].time);
            increments.push(m as f64 / s0);
        }
    }
    knots.reverse();
    increments.reverse();
    let mut acc = 0.0;
    let values = increments
        .iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect();
    StepFunction::new(knots, values, 0.0).expect("distinct event times are strictly increasing")
}

/// Fits a Cox proportional hazards model by Newton's method with step halving.
pub fn fit_cox(dataset: &SurvivalDataset, config: &CoxConfig) -> Result<CoxModel> {
    if dataset.n_events() == 0 {
        return Err(Error::DegenerateDataset("Cox regression needs at least one event".into()));
    }
    if !(config.ridge >= 0.0) {
        return Err(Error::InvalidParameter(format!("ridge must be >= 0, got {}", config.ridge)));
    }
    let d = dataset.n_features();
    let n = dataset.len() as f64;
    let ridge = config.ridge;
    let penalized = |beta: &[f64]| {
        log_partial_likelihood(dataset, beta) - 0.5 * ridge * beta.iter().map(|b| b * b).sum::<f64>()
    };
    let mut beta = vec![0.0; d];
    let mut current = penalized(&beta);
    let mut grad_norm = f64::INFINITY;
    for iter in 0..=config.max_iter {
        let der = derivatives(dataset, &beta, true);
        let b = DVector::from_column_slice(&beta);
        let gradient = der.gradient - &b * ridge;
        grad_norm = gradient.amax() / n;
        if grad_norm < config.tol {
            check_monotone_likelihood(dataset, &beta)?;
            return Ok(CoxModel {
                feature_names: dataset.feature_names().to_vec(),
                baseline_cumhaz: breslow_baseline(dataset, &beta),
                beta,
                ridge,
                iterations: iter,
                gradient_norm: grad_norm,
                log_likelihood: current,
            });
        }
        if iter == config.max_iter {
            break;
        }
        let info = der.information + DMatrix::identity(d, d) * ridge;
        let step = solve_spd(info, &gradient)?;
        let mut scale = 1.0;
        let mut accepted = false;
        // near the optimum the gain of a Newton step sinks below the rounding
        // noise of the likelihood sum; without this slack such steps get halved away
        let slack = 1e-11 * (1.0 + current.abs());
        for _ in 0..=30 {
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + scale * s).collect();
            let v = penalized(&cand);
            if v.is_finite() && v >= current - slack {
                beta = cand;
                current = v;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        let norm = beta.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if norm > config.divergence_bound {
            return Err(Error::Separation { norm });
        }
        if !accepted {
            // no ascent possible along the Newton direction: at the optimum up to rounding
            log::debug!("cox: step halving exhausted at iteration {iter}, gradient {grad_norm:.3e}");
            if grad_norm < config.tol.sqrt() {
                check_monotone_likelihood(dataset, &beta)?;
                return Ok(CoxModel {
                    feature_names: dataset.feature_names().to_vec(),
                    baseline_cumhaz: breslow_baseline(dataset, &beta),
                    beta,
                    ridge,
                    iterations: iter,
                    gradient_norm: grad_norm,
                    log_likelihood: current,
                });
            }
            break;
        }
    }
    Err(Error::NonConvergence {
        what: "Cox Newton iterations",
        iterations: config.max_iter,
        gap: grad_norm,
    })
}

/// Flags a large optimum along which the unpenalized likelihood keeps rising,
/// which happens when some covariate combination perfectly orders the events.
fn check_monotone_likelihood(dataset: &SurvivalDataset, beta: &[f64]) -> Result<()> {
    let norm = beta.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    if norm > 5.0 {
        let doubled: Vec<f64> = beta.iter().map(|b| 2.0 * b).collect();
        if log_partial_likelihood(dataset, &doubled) >= log_partial_likelihood(dataset, beta) - 1e-9 {
            return Err(Error::Separation { norm });
        }
    }
    Ok(())
}

/// Solves `A x = b` for symmetric positive (semi)definite `A`, adding jitter on failure.
pub(crate) fn solve_spd(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let d = a.nrows();
    let mut jitter = 0.0;
    for _ in 0..12 {
        let m = &a + DMatrix::identity(d, d) * jitter;
        if let Some(ch) = m.cholesky() {
            return Ok(ch.solve(b));
        }
        jitter = if jitter == 0.0 { 1e-10 } else { jitter * 10.0 };
    }
    Err(Error::NonFinite("Newton system is not positive definite".into()))
}

impl CoxModel {
    pub fn risk_score(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.beta).map(|(a, b)| a * b).sum()
    }

    pub fn survival(&self, x: &[f64], t: f64) -> f64 {
        (-self.baseline_cumhaz.eval(t) * self.risk_score(x).exp()).exp()
    }
}

/// `x' beta`; higher means riskier.
pub fn cox_risk_score(model: &CoxModel, x: &[f64]) -> f64 {
    model.risk_score(x)
}

/// `exp(-Lambda_0(t) exp(x' beta))`.
pub fn cox_survival(model: &CoxModel, x: &[f64], t: f64) -> f64 {
    model.survival(x, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SurvivalRecord;
    use crate::km::nelson_aalen;
    use proptest::prelude::*;

    fn ds(rows: &[(Vec<f64>, f64, bool)]) -> SurvivalDataset {
        let d = rows[0].0.len();
        SurvivalDataset::new(
            rows.iter().map(|(x, t, e)| SurvivalRecord::new(x.clone(), *t, *e)).collect(),
            (0..d).map(|i| format!("x{i}")).collect(),
        )
        .unwrap()
    }

    #[test]
    fn two_record_example_matches_one_dimensional_oracle() {
        let data = ds(&[(vec![1.0], 1.0, true), (vec![0.0], 2.0, true)]);
        let cfg = CoxConfig { ridge: 0.01, ..CoxConfig::default() };
        let m = fit_cox(&data, &cfg).unwrap();
        // maximize b - ln(e^b + 1) - 0.005 b^2 by bisection on the derivative
        let deriv = |b: f64| 1.0 - 1.0 / (1.0 + (-b).exp()) - 0.01 * b;
        let (mut lo, mut hi) = (0.0, 100.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if deriv(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!(m.beta[0] > 0.0);
        assert!((m.beta[0] - lo).abs() < 1e-6, "{} vs {lo}", m.beta[0]);
    }

    #[test]
    fn constant_column_gets_zero() {
        let data = ds(&[
            (vec![1.0, 0.3], 1.0, true),
            (vec![1.0, -0.2], 2.0, true),
            (vec![1.0, 0.9], 3.0, false),
            (vec![1.0, -1.0], 4.0, true),
            (vec![1.0, 0.1], 5.0, true),
        ]);
        let m = fit_cox(&data, &CoxConfig::default()).unwrap();
        assert!(m.beta[0].abs() < 1e-8);
    }

    #[test]
    fn baseline_at_zero_beta_is_nelson_aalen() {
        let data = ds(&[
            (vec![0.5], 1.0, true),
            (vec![0.1], 2.0, false),
            (vec![0.7], 2.0, true),
            (vec![0.2], 3.0, true),
            (vec![0.9], 3.0, true),
        ]);
        let b = breslow_baseline(&data, &[0.0]);
        let na = nelson_aalen(&data);
        for t in [0.5, 1.0, 1.5, 2.0, 3.0, 4.0] {
            assert!((b.eval(t) - na.eval(t)).abs() < 1e-14);
        }
        // hand oracle: 1/5, + 1/4, + 2/2
        assert!((b.eval(3.0) - (0.2 + 0.25 + 1.0)).abs() < 1e-14);
    }

    #[test]
    fn survival_properties() {
        let data = ds(&[
            (vec![0.5], 1.0, true),
            (vec![-0.1], 2.0, false),
            (vec![0.7], 2.5, true),
            (vec![-0.2], 3.0, true),
        ]);
        let m = fit_cox(&data, &CoxConfig { ridge: 0.1, ..CoxConfig::default() }).unwrap();
        assert_eq!(m.survival(&[0.3], 0.5), 1.0);
        assert!((m.survival(&[0.0], 2.7) - (-m.baseline_cumhaz.eval(2.7)).exp()).abs() < 1e-15);
        assert_eq!(cox_risk_score(&m, &[0.0]), 0.0);
    }

    #[test]
    fn separation_detected() {
        let data = ds(&[
            (vec![3.0], 1.0, true),
            (vec![2.0], 2.0, true),
            (vec![1.0], 3.0, true),
            (vec![0.0], 4.0, true),
        ]);
        let cfg = CoxConfig { ridge: 0.0, ..CoxConfig::default() };
        assert!(matches!(fit_cox(&data, &cfg), Err(Error::Separation { .. } | Error::NonConvergence { .. })));
    }

    proptest! {
        #[test]
        fn gradient_matches_finite_differences(
            rows in proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0, 0.1f64..5.0, any::<bool>()), 3..15),
            b0 in -1.0f64..1.0,
            b1 in -1.0f64..1.0,
        ) {
            let mut recs: Vec<(Vec<f64>, f64, bool)> = rows.iter().map(|(a, b, t, e)| (vec![*a, *b], (t * 4.0).round() / 4.0 + 0.25, *e)).collect();
            recs[0].2 = true;
            let data = ds(&recs);
            let beta = [b0, b1];
            let g = partial_likelihood_gradient(&data, &beta);
            for j in 0..2 {
                let h = 1e-6;
                let mut up = beta;
                up[j] += h;
                let mut dn = beta;
                dn[j] -= h;
                let fd = (log_partial_likelihood(&data, &up) - log_partial_likelihood(&data, &dn)) / (2.0 * h);
                prop_assert!((fd - g[j]).abs() <= 1e-5 * g[j].abs().max(1.0));
            }
        }
    }
}
