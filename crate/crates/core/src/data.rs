//! Survival records, datasets and risk sets.
//!
//! A dataset is a list of `(covariates, time, event)` triples plus feature
//! metadata. Construction validates the invariants every fitting routine relies
//! on: finite non-negative times, finite covariates, a consistent dimension and
//! at least one observed event.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::RawTable;

/// Reserved column holding observed times.
pub const TIME_COLUMN: &str = "time";
/// Reserved column holding the event indicator.
pub const EVENT_COLUMN: &str = "event";

/// One subject: covariates, observed time and whether the event occurred at that time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub covariates: Vec<f64>,
    pub time: f64,
    /// `true` if the event of interest was observed at `time`, `false` if right-censored.
    pub event: bool,
}

impl SurvivalRecord {
    pub fn new(covariates: Vec<f64>, time: f64, event: bool) -> Self {
        Self {
            covariates,
            time,
            event,
        }
    }
}

/// How a covariate column was produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    /// Indicator column belonging to the one-hot encoding of `group`.
    OneHot { group: String },
}

/// Counts reported after validation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub records: usize,
    pub events: usize,
    pub censored: usize,
    pub prevalence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalDataset {
    records: Vec<SurvivalRecord>,
    feature_names: Vec<String>,
    feature_kinds: Vec<FeatureKind>,
}

impl SurvivalDataset {
    /// Builds a dataset, checking every invariant. All features are tagged continuous.
    pub fn new(records: Vec<SurvivalRecord>, feature_names: Vec<String>) -> Result<Self> {
        let kinds = vec![FeatureKind::Continuous; feature_names.len()];
        Self::with_kinds(records, feature_names, kinds)
    }

    pub fn with_kinds(
        records: Vec<SurvivalRecord>,
        feature_names: Vec<String>,
        feature_kinds: Vec<FeatureKind>,
    ) -> Result<Self> {
        let ds = Self::unchecked(records, feature_names, feature_kinds)?;
        if ds.n_events() == 0 {
            return Err(Error::DegenerateDataset("no observed events".into()));
        }
        Ok(ds)
    }

    /// Like [`SurvivalDataset::with_kinds`] but accepts datasets without events.
    ///
    /// Estimators such as Kaplan–Meier are total; only fitting requires events.
    pub fn unchecked(
        records: Vec<SurvivalRecord>,
        feature_names: Vec<String>,
        feature_kinds: Vec<FeatureKind>,
    ) -> Result<Self> {
        if feature_kinds.len() != feature_names.len() {
            return Err(Error::DimensionMismatch {
                expected: feature_names.len(),
                actual: feature_kinds.len(),
            });
        }
        let d = feature_names.len();
        for (row, r) in records.iter().enumerate() {
            if !r.time.is_finite() || r.time < 0.0 {
                return Err(Error::InvalidTime {
                    row,
                    value: r.time,
                });
            }
            if r.covariates.len() != d {
                return Err(Error::Parse(format!(
                    "row {row} has {} covariates, expected {d}",
                    r.covariates.len()
                )));
            }
            if let Some(j) = r.covariates.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidCell {
                    row,
                    column: feature_names[j].clone(),
                    reason: "non-finite covariate".into(),
                });
            }
        }
        Ok(Self {
            records,
            feature_names,
            feature_kinds,
        })
    }

    pub fn records(&self) -> &[SurvivalRecord] {
        &self.records
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_kinds(&self) -> &[FeatureKind] {
        &self.feature_kinds
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_events(&self) -> usize {
        self.records.iter().filter(|r| r.event).count()
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.time).collect()
    }

    pub fn events(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.event).collect()
    }

    pub fn covariates(&self) -> Vec<Vec<f64>> {
        self.records.iter().map(|r| r.covariates.clone()).collect()
    }

    pub fn summary(&self) -> DatasetSummary {
        let events = self.n_events();
        let n = self.len();
        DatasetSummary {
            records: n,
            events,
            censored: n - events,
            prevalence: if n == 0 { 0.0 } else { events as f64 / n as f64 },
        }
    }

    /// Sorted distinct times at which at least one event was observed.
    pub fn distinct_event_times(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.event)
            .map(|r| r.time)
            .collect();
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }

    /// Records at the given indices, in that order. Does not require events.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            feature_names: self.feature_names.clone(),
            feature_kinds: self.feature_kinds.clone(),
        }
    }

    /// Keeps only the given covariate columns.
    pub fn select_columns(&self, columns: &[usize]) -> Result<Self> {
        let d = self.n_features();
        if let Some(&bad) = columns.iter().find(|&&c| c >= d) {
            return Err(Error::OutOfRange { index: bad, len: d });
        }
        let records = self
            .records
            .iter()
            .map(|r| SurvivalRecord {
                covariates: columns.iter().map(|&c| r.covariates[c]).collect(),
                time: r.time,
                event: r.event,
            })
            .collect();
        Ok(Self {
            records,
            feature_names: columns
                .iter()
                .map(|&c| self.feature_names[c].clone())
                .collect(),
            feature_kinds: columns
                .iter()
                .map(|&c| self.feature_kinds[c].clone())
                .collect(),
        })
    }

    /// Group id per column: one-hot columns of the same source share an id.
    pub fn feature_groups(&self) -> Vec<usize> {
        let mut named: Vec<(&str, usize)> = Vec::new();
        let mut next = 0;
        self.feature_kinds
            .iter()
            .map(|kind| match kind {
                FeatureKind::Continuous => {
                    next += 1;
                    next - 1
                }
                FeatureKind::OneHot { group } => {
                    if let Some(&(_, id)) = named.iter().find(|(g, _)| *g == group.as_str()) {
                        id
                    } else {
                        named.push((group, next));
                        next += 1;
                        next - 1
                    }
                }
            })
            .collect()
    }
}

/// Parses the reserved `time` / `event` columns of a raw table.
///
/// Returns times, event flags and the indices of the remaining (feature) columns.
pub fn parse_outcomes(raw: &RawTable) -> Result<(Vec<f64>, Vec<bool>, Vec<usize>)> {
    let time_col = raw
        .column_index(TIME_COLUMN)
        .ok_or_else(|| Error::MissingColumn(TIME_COLUMN.into()))?;
    let event_col = raw
        .column_index(EVENT_COLUMN)
        .ok_or_else(|| Error::MissingColumn(EVENT_COLUMN.into()))?;
    let mut times = Vec::with_capacity(raw.rows.len());
    let mut events = Vec::with_capacity(raw.rows.len());
    for (row, cells) in raw.rows.iter().enumerate() {
        let t = cells[time_col]
            .as_deref()
            .and_then(|s| s.trim().parse::<f64>().ok())
            .unwrap_or(f64::NAN);
        if !t.is_finite() || t < 0.0 {
            return Err(Error::InvalidTime { row, value: t });
        }
        let e = match cells[event_col].as_deref().map(str::trim) {
            Some("1") | Some("1.0") | Some("true") => true,
            Some("0") | Some("0.0") | Some("false") => false,
            other => {
                return Err(Error::InvalidEvent {
                    row,
                    value: other.unwrap_or("").to_string(),
                })
            }
        };
        times.push(t);
        events.push(e);
    }
    let features = (0..raw.columns.len())
        .filter(|&c| c != time_col && c != event_col)
        .collect();
    Ok((times, events, features))
}

/// Turns a parsed table with fully numeric, non-missing features into a dataset.
///
/// Tables with missing values or categorical columns go through
/// [`crate::preprocess`] first.
pub fn validate_dataset(raw: &RawTable) -> Result<SurvivalDataset> {
    let (times, events, feature_cols) = parse_outcomes(raw)?;
    let names: Vec<String> = feature_cols
        .iter()
        .map(|&c| raw.columns[c].clone())
        .collect();
    let mut records = Vec::with_capacity(raw.rows.len());
    for (row, cells) in raw.rows.iter().enumerate() {
        let mut cov = Vec::with_capacity(feature_cols.len());
        for (&c, name) in feature_cols.iter().zip(&names) {
            let v = match cells[c].as_deref() {
                None => {
                    return Err(Error::InvalidCell {
                        row,
                        column: name.clone(),
                        reason: "missing value (preprocess the table first)".into(),
                    })
                }
                Some(s) => s.trim().parse::<f64>().map_err(|_| Error::InvalidCell {
                    row,
                    column: name.clone(),
                    reason: format!("`{s}` is not numeric"),
                })?,
            };
            cov.push(v);
        }
        records.push(SurvivalRecord::new(cov, times[row], events[row]));
    }
    let ds = SurvivalDataset::new(records, names)?;
    let s = ds.summary();
    log::info!(
        "validated dataset: {} records, {} events, {} censored (prevalence {:.4})",
        s.records,
        s.events,
        s.censored,
        s.prevalence
    );
    Ok(ds)
}

/// Indices `j` with `time_j >= t`, regardless of the event indicator.
pub fn risk_set(dataset: &SurvivalDataset, t: f64) -> Vec<usize> {
    dataset
        .records()
        .iter()
        .enumerate()
        .filter(|(_, r)| r.time >= t)
        .map(|(i, _)| i)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[&[&str]]) -> RawTable {
        RawTable {
            columns: vec!["x".into(), "time".into(), "event".into()],
            rows: rows
                .iter()
                .map(|r| {
                    r.iter()
                        .map(|c| if c.is_empty() { None } else { Some(c.to_string()) })
                        .collect()
                })
                .collect(),
        }
    }

    pub(crate) fn three() -> SurvivalDataset {
        SurvivalDataset::new(
            vec![
                SurvivalRecord::new(vec![0.0], 1.0, true),
                SurvivalRecord::new(vec![1.0], 2.0, false),
                SurvivalRecord::new(vec![2.0], 3.0, true),
            ],
            vec!["x".into()],
        )
        .unwrap()
    }

    #[test]
    fn validate_counts_events() {
        let raw = table(&[&["0.5", "1", "1"], &["1.5", "2", "0"], &["2.5", "3", "1"]]);
        let ds = validate_dataset(&raw).unwrap();
        let s = ds.summary();
        assert_eq!((s.events, s.censored), (2, 1));
        assert!((s.prevalence - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn negative_time_names_row() {
        let raw = table(&[&["0.5", "1", "1"], &["1.5", "-1", "0"]]);
        match validate_dataset(&raw) {
            Err(Error::InvalidTime { row, .. }) => assert_eq!(row, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn no_events_is_degenerate() {
        let raw = table(&[&["0.5", "1", "0"], &["1.5", "2", "0"]]);
        assert!(matches!(
            validate_dataset(&raw),
            Err(Error::DegenerateDataset(_))
        ));
    }

    #[test]
    fn missing_feature_rejected() {
        let raw = table(&[&["", "1", "1"]]);
        assert!(matches!(
            validate_dataset(&raw),
            Err(Error::InvalidCell { row: 0, .. })
        ));
    }

    #[test]
    fn risk_set_examples() {
        let ds = three();
        assert_eq!(risk_set(&ds, 2.0), vec![1, 2]);
        assert_eq!(risk_set(&ds, 0.0), vec![0, 1, 2]);
        assert!(risk_set(&ds, 3.5).is_empty());
    }

    #[test]
    fn one_hot_groups_share_ids() {
        let ds = SurvivalDataset::with_kinds(
            vec![SurvivalRecord::new(vec![0.0, 1.0, 0.0, 2.0], 1.0, true)],
            vec!["a".into(), "c=x".into(), "c=y".into(), "b".into()],
            vec![
                FeatureKind::Continuous,
                FeatureKind::OneHot { group: "c".into() },
                FeatureKind::OneHot { group: "c".into() },
                FeatureKind::Continuous,
            ],
        )
        .unwrap();
        assert_eq!(ds.feature_groups(), vec![0, 1, 1, 2]);
    }
}
