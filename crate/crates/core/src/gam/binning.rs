use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Quantile discretization of one feature.
///
/// Cuts sit halfway between adjacent distinct training values, so every real
/// maps to exactly one bin: `bin(x) = #{cuts < x}`. Out-of-range values land in
/// the end bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBinning {
    pub cuts: Vec<f64>,
    /// Smallest and largest training value, used as outer edges on export.
    pub min: f64,
    pub max: f64,
}

impl FeatureBinning {
    pub fn n_bins(&self) -> usize {
        self.cuts.len() + 1
    }

    #[inline]
    pub fn bin(&self, x: f64) -> usize {
        self.cuts.partition_point(|&c| c < x)
    }

    /// `(low, high)` edges of bin `b`.
    pub fn edges(&self, b: usize) -> (f64, f64) {
        let low = if b == 0 { self.min } else { self.cuts[b - 1] };
        let high = if b == self.cuts.len() { self.max } else { self.cuts[b] };
        (low, high)
    }

    pub fn fit(values: &[f64], max_bins: usize) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mut distinct = sorted.clone();
        distinct.dedup();
        let cuts = if distinct.len() <= max_bins {
            distinct.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
        } else {
            let mut cuts = Vec::with_capacity(max_bins - 1);
            for k in 1..max_bins {
                let idx = k * n / max_bins;
                if idx == 0 || idx >= n {
                    continue;
                }
                let (lo, hi) = (sorted[idx - 1], sorted[idx]);
                if lo < hi {
                    cuts.push(0.5 * (lo + hi));
                } else {
                    // inside a run of ties: cut after the run
                    let end = sorted.partition_point(|&s| s <= hi);
                    if end < n {
                        cuts.push(0.5 * (hi + sorted[end]));
                    }
                }
            }
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            cuts
        };
        Self {
            cuts,
            min: sorted.first().copied().unwrap_or(0.0),
            max: sorted.last().copied().unwrap_or(0.0),
        }
    }
}

/// Column-major bin codes for a row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedMatrix {
    pub feature_names: Vec<String>,
    pub binning: Vec<FeatureBinning>,
    /// `codes[feature][row]`.
    pub codes: Vec<Vec<u16>>,
    pub n_rows: usize,
}

impl BinnedMatrix {
    pub fn n_features(&self) -> usize {
        self.binning.len()
    }

    /// Bins rows with existing edges.
    pub fn apply(
        feature_names: Vec<String>,
        binning: Vec<FeatureBinning>,
        rows: &[Vec<f64>],
    ) -> Result<Self> {
        let d = binning.len();
        if let Some(r) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: r.len(),
            });
        }
        let codes = binning
            .iter()
            .enumerate()
            .map(|(f, b)| rows.iter().map(|r| b.bin(r[f]) as u16).collect())
            .collect();
        Ok(Self {
            feature_names,
            binning,
            codes,
            n_rows: rows.len(),
        })
    }

    /// Per-bin row counts of feature `f`.
    pub fn bin_counts(&self, f: usize) -> Vec<f64> {
        let mut counts = vec![0.0; self.binning[f].n_bins()];
        for &c in &self.codes[f] {
            counts[c as usize] += 1.0;
        }
        counts
    }
}

/// Quantile-bins every column of `rows`.
pub fn bin_features(
    rows: &[Vec<f64>],
    feature_names: Vec<String>,
    max_bins: usize,
) -> Result<BinnedMatrix> {
    if rows.is_empty() {
        return Err(Error::InvalidParameter("cannot bin an empty matrix".into()));
    }
    if !(2..=u16::MAX as usize).contains(&max_bins) {
        return Err(Error::InvalidParameter(format!(
            "max_bins must lie in [2, 65535], got {max_bins}"
        )));
    }
    let d = feature_names.len();
    if let Some(r) = rows.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: r.len(),
        });
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature matrix".into()));
    }
    let binning = (0..d)
        .map(|f| {
            let col: Vec<f64> = rows.iter().map(|r| r[f]).collect();
            FeatureBinning::fit(&col, max_bins)
        })
        .collect();
    BinnedMatrix::apply(feature_names, binning, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(d: usize) -> Vec<String> {
        (0..d).map(|i| format!("x{i}")).collect()
    }

    #[test]
    fn binary_feature_two_bins() {
        let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![f64::from(i % 2)]).collect();
        let b = bin_features(&rows, names(1), 64).unwrap();
        assert_eq!(b.binning[0].n_bins(), 2);
        assert_eq!(b.codes[0][0], 0);
        assert_eq!(b.codes[0][1], 1);
    }

    #[test]
    fn constant_feature_one_bin() {
        let rows = vec![vec![3.0]; 10];
        let b = bin_features(&rows, names(1), 64).unwrap();
        assert_eq!(b.binning[0].n_bins(), 1);
    }

    #[test]
    fn uniform_quartiles() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let vals: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        let rows: Vec<Vec<f64>> = vals.iter().map(|&v| vec![v]).collect();
        let b = bin_features(&rows, names(1), 4).unwrap();
        // sort-based quantile oracle
        let mut s = vals.clone();
        s.sort_by(f64::total_cmp);
        let cuts = &b.binning[0].cuts;
        assert_eq!(cuts.len(), 3);
        for (k, c) in cuts.iter().enumerate() {
            let q = s[(k + 1) * 250];
            assert!((c - q).abs() < 0.01, "cut {c} vs quantile {q}");
        }
        let counts = b.bin_counts(0);
        assert!(counts.iter().all(|&c| c == 250.0));
    }

    #[test]
    fn heavy_ties_still_strictly_increasing() {
        let rows: Vec<Vec<f64>> = (0..500)
            .map(|i| vec![if i < 400 { 0.0 } else { f64::from(i) }])
            .collect();
        let b = bin_features(&rows, names(1), 8).unwrap();
        let cuts = &b.binning[0].cuts;
        assert!(cuts.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(b.binning[0].bin(0.0), 0);
    }

    #[test]
    fn errors() {
        assert!(bin_features(&[], names(1), 4).is_err());
        assert!(bin_features(&[vec![1.0]], names(1), 1).is_err());
        assert!(bin_features(&[vec![f64::NAN]], names(1), 4).is_err());
    }

    #[test]
    fn out_of_range_clamps_to_end_bins() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![f64::from(i)]).collect();
        let b = bin_features(&rows, names(1), 4).unwrap();
        let fb = &b.binning[0];
        assert_eq!(fb.bin(-100.0), 0);
        assert_eq!(fb.bin(100.0), fb.n_bins() - 1);
    }
}
