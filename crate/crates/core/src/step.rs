//! Right-continuous step functions and survival curves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-constant, right-continuous function on `[0, inf)`.
///
/// `eval(t)` is the value at the largest knot `<= t`, or `value_before_first_knot`
/// when `t` precedes every knot. Past the last knot the last value carries forward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    knots: Vec<f64>,
    values: Vec<f64>,
    value_before_first_knot: f64,
}

impl StepFunction {
    pub fn new(knots: Vec<f64>, values: Vec<f64>, value_before_first_knot: f64) -> Result<Self> {
        if knots.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: knots.len(),
                actual: values.len(),
            });
        }
        if knots.iter().any(|k| !k.is_finite() || *k < 0.0)
            || knots.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::InvalidParameter(
                "step-function knots must be finite, non-negative and strictly increasing".into(),
            ));
        }
        Ok(Self {
            knots,
            values,
            value_before_first_knot,
        })
    }

    /// Constant function.
    pub fn constant(value: f64) -> Self {
        Self {
            knots: Vec::new(),
            values: Vec::new(),
            value_before_first_knot: value,
        }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value_before_first_knot(&self) -> f64 {
        self.value_before_first_knot
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self.knots.partition_point(|&k| k <= t) {
            0 => self.value_before_first_knot,
            i => self.values[i - 1],
        }
    }

    /// Left limit `lim_{s -> t-} f(s)`: value at the largest knot strictly below `t`.
    pub fn eval_left(&self, t: f64) -> f64 {
        match self.knots.partition_point(|&k| k < t) {
            0 => self.value_before_first_knot,
            i => self.values[i - 1],
        }
    }
}

/// Predicted survival probabilities on an increasing time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub times: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl SurvivalCurve {
    pub fn is_monotone(&self) -> bool {
        self.probabilities.windows(2).all(|w| w[1] <= w[0])
            && self
                .probabilities
                .iter()
                .all(|p| (0.0..=1.0).contains(p))
    }

    /// Value at `t` read off the grid as a right-continuous step; 1 before the first grid time.
    pub fn at(&self, t: f64) -> f64 {
        match self.times.partition_point(|&s| s <= t) {
            0 => 1.0,
            i => self.probabilities[i - 1],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn right_continuous_eval() {
        let f = StepFunction::new(vec![1.0, 3.0], vec![0.5, 0.0], 1.0).unwrap();
        assert_eq!(f.eval(0.0), 1.0);
        assert_eq!(f.eval(1.0), 0.5);
        assert_eq!(f.eval(2.9), 0.5);
        assert_eq!(f.eval(3.0), 0.0);
        assert_eq!(f.eval(100.0), 0.0);
        assert_eq!(f.eval_left(1.0), 1.0);
        assert_eq!(f.eval_left(3.0), 0.5);
    }

    #[test]
    fn rejects_unsorted_knots() {
        assert!(StepFunction::new(vec![2.0, 1.0], vec![0.0, 0.0], 1.0).is_err());
        assert!(StepFunction::new(vec![1.0, 1.0], vec![0.0, 0.0], 1.0).is_err());
    }
}
