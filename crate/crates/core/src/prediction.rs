//! Survival curves from a classifier fit on stacked data.
//!
//! Two estimators are provided:
//!
//! * the Monte Carlo route: `Lambda(t|x) ~ (t/n) * sum_i f(x || t_i)` with the `t_i`
//!   drawn from `(0, t]`, followed by `S = exp(-Lambda)`;
//! * the discrete product `S(t|x) = prod_{t_k <= t} (1 - f(x || t_k))` over the
//!   training event times.
//!
//! The discrete product is exact for a discrete event-time law (see
//! [`discrete_tail_product`]) but multiplies one factor per training event time,
//! so with many event times and a non-vanishing `f` it collapses towards 0.
//!
//! A stacked classifier outputs a probability per risk-set row, not a rate per
//! unit time. [`RateCalibrated`] converts it with the density of distinct event
//! times and the sampling ratio; the raw probability can still be integrated
//! directly since every classifier is also a [`HazardRate`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::step::SurvivalCurve;

/// Default number of Monte Carlo time samples.
pub const DEFAULT_N_MC: usize = 64;

/// A classifier trained on stacked rows; the last input coordinate is the time feature.
pub trait HazardClassifier: Sync {
    /// Probability in `[0, 1]` that the stacked row is a positive (event) row.
    fn predict_probability(&self, features: &[f64]) -> f64;
}

impl<F> HazardClassifier for F
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn predict_probability(&self, features: &[f64]) -> f64 {
        self(features)
    }
}

/// A non-negative hazard evaluated at `x || t`.
pub trait HazardRate: Sync {
    fn hazard_rate(&self, features: &[f64]) -> f64;
}

impl<C: HazardClassifier + ?Sized> HazardRate for C {
    fn hazard_rate(&self, features: &[f64]) -> f64 {
        self.predict_probability(features)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// One uniform draw inside each of `n` equal subintervals.
    #[default]
    Stratified,
    /// `n` independent uniform draws over the whole interval.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionConfig {
    pub n_mc: usize,
    pub seed: u64,
    /// Evaluation times for [`survival_curve`]; strictly increasing and positive.
    pub grid: Vec<f64>,
    #[serde(default)]
    pub sampling: Sampling,
}

impl Default for PredictionConfig {
    fn default() -> Self {
        Self {
            n_mc: DEFAULT_N_MC,
            seed: 0,
            grid: Vec::new(),
            sampling: Sampling::Stratified,
        }
    }
}

impl PredictionConfig {
    fn check_n(&self) -> Result<()> {
        if self.n_mc == 0 {
            return Err(Error::InvalidParameter("n_mc must be at least 1".into()));
        }
        Ok(())
    }

    pub fn validate_grid(&self) -> Result<()> {
        if self.grid.is_empty()
            || self.grid.iter().any(|t| !t.is_finite() || *t <= 0.0)
            || self.grid.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::InvalidParameter(
                "prediction grid must be non-empty, positive and strictly increasing".into(),
            ));
        }
        Ok(())
    }
}

/// Draws `n` times in `(lo, hi]` from the given RNG stream.
fn sample_times(lo: f64, hi: f64, n: usize, sampling: Sampling, seed: u64, stream: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let width = hi - lo;
    (0..n)
        .map(|i| {
            let u: f64 = rng.random();
            match sampling {
                Sampling::Stratified => lo + width * ((i + 1) as f64 - u) / n as f64,
                Sampling::Uniform => lo + width * (1.0 - u),
            }
        })
        .collect()
}

fn integrate<H: HazardRate + ?Sized>(f: &H, x: &[f64], times: &[f64], width: f64, buf: &mut Vec<f64>) -> f64 {
    buf.clear();
    buf.extend_from_slice(x);
    buf.push(0.0);
    let last = buf.len() - 1;
    let sum: f64 = times
        .iter()
        .map(|&s| {
            buf[last] = s;
            f.hazard_rate(buf).max(0.0)
        })
        .sum();
    width * sum / times.len() as f64
}

/// Monte Carlo estimate of the cumulative hazard `Lambda(t | x)`.
pub fn predict_cumulative_hazard<H: HazardRate + ?Sized>(
    f: &H,
    x: &[f64],
    t: f64,
    config: &PredictionConfig,
) -> Result<f64> {
    config.check_n()?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "prediction time must be positive, got {t}"
        )));
    }
    let times = sample_times(0.0, t, config.n_mc, config.sampling, config.seed, 0);
    Ok(integrate(f, x, &times, t, &mut Vec::new()))
}

/// `exp(-Lambda(t | x))`; equals 1 at `t = 0`.
pub fn predict_survival_mc<H: HazardRate + ?Sized>(
    f: &H,
    x: &[f64],
    t: f64,
    config: &PredictionConfig,
) -> Result<f64> {
    if t == 0.0 {
        return Ok(1.0);
    }
    Ok((-predict_cumulative_hazard(f, x, t, config)?).exp())
}

/// Discrete product estimator over sorted training event times.
pub fn predict_survival_discrete<C: HazardClassifier + ?Sized>(
    f: &C,
    x: &[f64],
    t: f64,
    event_times: &[f64],
) -> f64 {
    let mut buf = x.to_vec();
    buf.push(0.0);
    let last = buf.len() - 1;
    let mut s = 1.0;
    for &tk in event_times.iter().take_while(|&&tk| tk <= t) {
        buf[last] = tk;
        s *= (1.0 - f.predict_probability(&buf)).clamp(0.0, 1.0);
    }
    s
}

/// Survival curve on `config.grid`.
///
/// Each grid interval `(t_{k-1}, t_k]` gets its own `n_mc` samples (RNG stream
/// `k`); interval integrals accumulate, so the cumulative hazard never decreases
/// along the grid and a one-point grid reproduces [`predict_survival_mc`].
pub fn survival_curve<H: HazardRate + ?Sized>(
    f: &H,
    x: &[f64],
    config: &PredictionConfig,
) -> Result<SurvivalCurve> {
    config.check_n()?;
    config.validate_grid()?;
    let mut buf = Vec::with_capacity(x.len() + 1);
    let mut cumulative = 0.0;
    let mut lo = 0.0;
    let mut probabilities = Vec::with_capacity(config.grid.len());
    for (k, &hi) in config.grid.iter().enumerate() {
        let times = sample_times(lo, hi, config.n_mc, config.sampling, config.seed, k as u64);
        cumulative += integrate(f, x, &times, hi - lo, &mut buf);
        probabilities.push((-cumulative).exp());
        lo = hi;
    }
    Ok(SurvivalCurve {
        times: config.grid.clone(),
        probabilities,
    })
}

/// [`survival_curve`] for many covariate vectors, in parallel.
pub fn survival_curves<H: HazardRate + ?Sized>(
    f: &H,
    xs: &[Vec<f64>],
    config: &PredictionConfig,
) -> Result<Vec<SurvivalCurve>> {
    xs.par_iter().map(|x| survival_curve(f, x, config)).collect()
}

/// `prod_{t_i <= t} (1 - lambda(t_i))` for a discrete law on `support` with
/// `lambda(t_i) = P(T = t_i) / P(T >= t_i)`.
///
/// Equals `P(T > t)`; the tail tests check it against direct summation.
pub fn discrete_tail_product(support: &[f64], probabilities: &[f64], t: f64) -> Result<f64> {
    if support.len() != probabilities.len() {
        return Err(Error::DimensionMismatch {
            expected: support.len(),
            actual: probabilities.len(),
        });
    }
    if support.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("support must be strictly increasing".into()));
    }
    if probabilities.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::InvalidParameter("probabilities must be non-negative".into()));
    }
    let total: f64 = probabilities.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "probabilities must sum to 1, got {total}"
        )));
    }
    // P(T >= t_i), accumulated from the right
    let mut at_risk = vec![0.0; probabilities.len()];
    let mut acc = 0.0;
    for i in (0..probabilities.len()).rev() {
        acc += probabilities[i];
        at_risk[i] = acc;
    }
    let mut s = 1.0;
    for i in 0..support.len() {
        if support[i] > t {
            break;
        }
        if at_risk[i] <= 0.0 {
            return Ok(0.0);
        }
        let hazard = (probabilities[i] / at_risk[i]).min(1.0);
        s *= 1.0 - hazard;
    }
    Ok(s)
}

/// Converts stacked-classifier probabilities into hazard rates per unit time.
///
/// In stacked data the odds of a positive row at `(x, t)` are
/// `lambda(t|x) / (gamma * rho(t))`, where `rho` is the rate of distinct event
/// times per unit time. `rho` is estimated with a reflected Gaussian kernel
/// density over the training event times and tabulated on a fixed grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRateCalibration {
    pub gamma: f64,
    pub bandwidth: f64,
    pub grid_step: f64,
    /// `gamma * rho(t)` at `t = i * grid_step`.
    pub factor: Vec<f64>,
}

const CALIBRATION_GRID: usize = 1024;

impl EventRateCalibration {
    /// `event_times`: distinct training event times; `gamma`: the stacking ratio.
    pub fn fit(event_times: &[f64], gamma: f64) -> Result<Self> {
        if event_times.is_empty() {
            return Err(Error::DegenerateDataset("no event times to calibrate on".into()));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidParameter(format!("gamma {gamma} outside (0, 1]")));
        }
        let mut times = event_times.to_vec();
        times.sort_by(f64::total_cmp);
        let k = times.len() as f64;
        let mean = times.iter().sum::<f64>() / k;
        let sd = (times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / k).sqrt();
        let q = |p: f64| times[((k - 1.0) * p).round() as usize];
        let iqr = q(0.75) - q(0.25);
        let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
        let mut bandwidth = 0.9 * spread * k.powf(-0.2);
        if !(bandwidth > 0.0) {
            bandwidth = times.last().copied().unwrap_or(1.0).max(1.0) * 0.05;
        }
        let end = times[times.len() - 1] + 3.0 * bandwidth;
        let grid_step = end / (CALIBRATION_GRID - 1) as f64;
        let norm = 1.0 / (bandwidth * (2.0 * std::f64::consts::PI).sqrt());
        let factor = (0..CALIBRATION_GRID)
            .into_par_iter()
            .map(|i| {
                let t = i as f64 * grid_step;
                let lo = times.partition_point(|&s| s < t - 8.0 * bandwidth);
                let hi = times.partition_point(|&s| s <= t + 8.0 * bandwidth);
                let mut dens: f64 = times[lo..hi]
                    .iter()
                    .map(|&s| (-0.5 * ((t - s) / bandwidth).powi(2)).exp())
                    .sum();
                // reflection about 0
                let hi_reflect = times.partition_point(|&s| s <= 8.0 * bandwidth - t);
                dens += times[..hi_reflect]
                    .iter()
                    .map(|&s| (-0.5 * ((t + s) / bandwidth).powi(2)).exp())
                    .sum::<f64>();
                gamma * dens * norm
            })
            .collect();
        Ok(Self {
            gamma,
            bandwidth,
            grid_step,
            factor,
        })
    }

    /// `gamma * rho(t)`, linearly interpolated and held constant past the grid.
    pub fn rate_factor(&self, t: f64) -> f64 {
        let pos = (t.max(0.0)) / self.grid_step;
        let i = pos.floor() as usize;
        if i + 1 >= self.factor.len() {
            return self.factor[self.factor.len() - 1];
        }
        let w = pos - i as f64;
        self.factor[i] * (1.0 - w) + self.factor[i + 1] * w
    }
}

/// A stacked classifier seen as a hazard rate: `gamma * rho(t) * p / (1 - p)`.
pub struct RateCalibrated<'a, C: ?Sized> {
    pub classifier: &'a C,
    pub calibration: &'a EventRateCalibration,
}

impl<'a, C: HazardClassifier + ?Sized> RateCalibrated<'a, C> {
    pub fn new(classifier: &'a C, calibration: &'a EventRateCalibration) -> Self {
        Self {
            classifier,
            calibration,
        }
    }
}

impl<C: HazardClassifier + ?Sized> HazardRate for RateCalibrated<'_, C> {
    fn hazard_rate(&self, features: &[f64]) -> f64 {
        let p = self
            .classifier
            .predict_probability(features)
            .clamp(0.0, 1.0 - 1e-12);
        let t = features[features.len() - 1];
        self.calibration.rate_factor(t) * p / (1.0 - p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, seed: u64) -> PredictionConfig {
        PredictionConfig {
            n_mc: n,
            seed,
            grid: vec![],
            sampling: Sampling::Stratified,
        }
    }

    #[test]
    fn constant_integrand_is_exact() {
        let f = |_: &[f64]| 0.3;
        for seed in 0..5 {
            let l = predict_cumulative_hazard(&f, &[1.0, 2.0], 4.0, &cfg(17, seed)).unwrap();
            assert!((l - 1.2).abs() < 1e-12);
            let s = predict_survival_mc(&f, &[1.0], 4.0, &cfg(17, seed)).unwrap();
            assert!((s - (-1.2f64).exp()).abs() < 1e-12);
        }
        let zero = |_: &[f64]| 0.0;
        assert_eq!(predict_cumulative_hazard(&zero, &[], 3.0, &cfg(8, 1)).unwrap(), 0.0);
        assert_eq!(predict_survival_mc(&zero, &[], 3.0, &cfg(8, 1)).unwrap(), 1.0);
    }

    #[test]
    fn linear_integrand_converges() {
        // integral of s over (0, 1] is 1/2
        let f = |v: &[f64]| v[v.len() - 1];
        for sampling in [Sampling::Stratified, Sampling::Uniform] {
            let n = 4096;
            let c = PredictionConfig { sampling, ..cfg(n, 11) };
            let l = predict_cumulative_hazard(&f, &[], 1.0, &c).unwrap();
            assert!((l - 0.5).abs() < 3.0 / (n as f64).sqrt(), "{l}");
        }
    }

    #[test]
    fn rejects_non_positive_time() {
        let f = |_: &[f64]| 0.1;
        assert!(predict_cumulative_hazard(&f, &[], 0.0, &cfg(4, 0)).is_err());
        assert!(predict_cumulative_hazard(&f, &[], -1.0, &cfg(4, 0)).is_err());
        assert_eq!(predict_survival_mc(&f, &[], 0.0, &cfg(4, 0)).unwrap(), 1.0);
    }

    #[test]
    fn discrete_examples() {
        let zero = |_: &[f64]| 0.0;
        assert_eq!(predict_survival_discrete(&zero, &[1.0], 5.0, &[1.0, 2.0]), 1.0);
        let half = |_: &[f64]| 0.5;
        assert_eq!(predict_survival_discrete(&half, &[1.0], 1.5, &[1.0, 2.0]), 0.5);
        let c = 0.1;
        let k = 200;
        let times: Vec<f64> = (1..=k).map(|i| i as f64 * 0.01).collect();
        let f = |_: &[f64]| c;
        let s = predict_survival_discrete(&f, &[], 10.0, &times);
        assert!((s - (1.0 - c).powi(k)).abs() < 1e-15);
        assert!(s < 1e-9);
    }

    #[test]
    fn curve_examples() {
        let p = 0.2;
        let f = |_: &[f64]| p;
        let c = PredictionConfig { grid: vec![1.0, 2.0, 3.0], ..cfg(9, 4) };
        let curve = survival_curve(&f, &[0.0], &c).unwrap();
        for (k, s) in curve.probabilities.iter().enumerate() {
            assert!((s - (-(k as f64 + 1.0) * p).exp()).abs() < 1e-12);
        }
        let g = |v: &[f64]| (v[0] * v[1]).sin().abs();
        let one = PredictionConfig { grid: vec![2.5], ..cfg(33, 8) };
        let curve = survival_curve(&g, &[0.7], &one).unwrap();
        let direct = predict_survival_mc(&g, &[0.7], 2.5, &one).unwrap();
        assert_eq!(curve.probabilities[0], direct);
    }

    #[test]
    fn random_hazards_give_monotone_curves() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for inst in 0..1000 {
            let a: f64 = rng.random::<f64>() * 2.0;
            let b: f64 = rng.random::<f64>() * 5.0;
            let f = move |v: &[f64]| ((a * v[0] + b * v[1]).sin() * 0.5 + 0.5) * a;
            let grid: Vec<f64> = (1..=8).map(|k| k as f64 * (0.1 + b)).collect();
            let c = PredictionConfig { grid, ..cfg(5, inst) };
            let curve = survival_curve(&f, &[rng.random()], &c).unwrap();
            assert!(curve.is_monotone(), "instance {inst}");
        }
    }

    #[test]
    fn tail_product_examples() {
        let s1 = discrete_tail_product(&[1.0, 2.0], &[0.5, 0.5], 1.0).unwrap();
        assert!((s1 - 0.5).abs() < 1e-15);
        assert_eq!(discrete_tail_product(&[1.0, 2.0], &[0.5, 0.5], 2.0).unwrap(), 0.0);
        assert_eq!(discrete_tail_product(&[1.0], &[1.0], 0.5).unwrap(), 1.0);
        assert_eq!(discrete_tail_product(&[1.0, 3.0, 4.0], &[0.2, 0.3, 0.5], 9.0).unwrap(), 0.0);
        // zero mass before the end of the support
        assert_eq!(discrete_tail_product(&[1.0, 2.0, 3.0], &[1.0, 0.0, 0.0], 3.0).unwrap(), 0.0);
        assert!(discrete_tail_product(&[1.0, 2.0], &[0.5, 0.6], 1.0).is_err());
    }

    #[test]
    fn calibration_recovers_uniform_event_rate() {
        // 1000 distinct event times spread evenly over (0, 10]: rho = 100 per unit time
        let times: Vec<f64> = (1..=1000).map(|i| i as f64 * 0.01).collect();
        let cal = EventRateCalibration::fit(&times, 0.05).unwrap();
        for t in [2.0, 5.0, 8.0] {
            let f = cal.rate_factor(t);
            assert!((f - 5.0).abs() < 0.1, "t={t}: {f}");
        }
        // reflection keeps the boundary unbiased
        assert!((cal.rate_factor(0.0) - 5.0).abs() < 0.3);
    }
}
