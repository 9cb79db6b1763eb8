//! Model files and plot-ready exports.
//!
//! A model file is a JSON document tagged with [`MODEL_SCHEMA`]. It carries the
//! fitted estimator together with what prediction needs besides it: the
//! preprocessing transform, the stacking ratio, the distinct training event times
//! and the event-rate calibration.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::baselines::{CoxModel, LogisticModel};
use crate::error::{Error, Result};
use crate::gam::GamModel;
use crate::prediction::{EventRateCalibration, HazardClassifier};
use crate::preprocess::PreprocessModel;

pub const MODEL_SCHEMA: &str = "survstack-model/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Estimator {
    Gam(GamModel),
    Logistic(LogisticModel),
    Cox(CoxModel),
}

impl Estimator {
    pub fn kind(&self) -> &'static str {
        match self {
            Estimator::Gam(_) => "gam",
            Estimator::Logistic(_) => "logistic",
            Estimator::Cox(_) => "cox",
        }
    }

    /// The stacked-row classifier, if this is one.
    pub fn classifier(&self) -> Option<&dyn HazardClassifier> {
        match self {
            Estimator::Gam(m) => Some(m),
            Estimator::Logistic(m) => Some(m),
            Estimator::Cox(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema: String,
    /// Covariate names expected at prediction time, after preprocessing.
    pub feature_names: Vec<String>,
    /// Columns of the preprocessed data the estimator was fit on.
    pub selected_columns: Option<Vec<usize>>,
    pub preprocess: Option<PreprocessModel>,
    pub gamma: f64,
    /// Distinct training event times, ascending.
    pub event_times: Vec<f64>,
    pub calibration: Option<EventRateCalibration>,
    pub estimator: Estimator,
}

impl ModelFile {
    pub fn new(estimator: Estimator, feature_names: Vec<String>, gamma: f64, event_times: Vec<f64>) -> Self {
        Self {
            schema: MODEL_SCHEMA.to_string(),
            feature_names,
            selected_columns: None,
            preprocess: None,
            gamma,
            event_times,
            calibration: None,
            estimator,
        }
    }

    pub fn write<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }

    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_reader(reader)?;
        match value.get("schema").and_then(|s| s.as_str()) {
            Some(MODEL_SCHEMA) => Ok(serde_json::from_value(value)?),
            Some(other) => Err(Error::SchemaMismatch(format!(
                "model schema {other:?}, expected {MODEL_SCHEMA:?}"
            ))),
            None => Err(Error::SchemaMismatch("model file has no schema tag".into())),
        }
    }
}

/// Main-effect export: `term,bin_low,bin_high,contribution`.
pub fn write_shape_functions<W: Write>(model: &GamModel, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["term", "bin_low", "bin_high", "contribution"])?;
    for f in 0..model.n_features() {
        let s = model.shape_function(f)?;
        for b in 0..s.contributions.len() {
            w.write_record([
                s.feature.clone(),
                format!("{}", s.bin_low[b]),
                format!("{}", s.bin_high[b]),
                format!("{}", s.contributions[b]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Interaction export: one row per table cell.
pub fn write_interactions<W: Write>(model: &GamModel, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["term", "first_low", "first_high", "second_low", "second_high", "contribution"])?;
    for t in &model.interactions {
        let (bi, bj) = (&model.binning[t.first], &model.binning[t.second]);
        let name = format!("{} & {}", model.feature_names[t.first], model.feature_names[t.second]);
        let cols = bj.n_bins();
        for a in 0..bi.n_bins() {
            let (al, ah) = bi.edges(a);
            for b in 0..cols {
                let (bl, bh) = bj.edges(b);
                w.write_record([
                    name.clone(),
                    format!("{al}"),
                    format!("{ah}"),
                    format!("{bl}"),
                    format!("{bh}"),
                    format!("{}", t.table[a * cols + b]),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gam::{bin_features, fit_gam, GamConfig};

    #[test]
    fn round_trip_is_lossless() {
        let rows: Vec<Vec<f64>> = (0..200).map(|i| vec![f64::from(i % 17) / 7.0, f64::from(i % 5)]).collect();
        let labels: Vec<bool> = (0..200).map(|i| (i % 17) > 9 || i % 5 == 0).collect();
        let binned = bin_features(&rows, vec!["a".into(), "b".into()], 64).unwrap();
        let cfg = GamConfig { max_rounds: 50, ..GamConfig::default() };
        let model = fit_gam(&binned, &labels, &cfg).unwrap();
        let file = ModelFile::new(Estimator::Gam(model), vec!["a".into(), "b".into()], 0.5, vec![1.0, 2.0]);
        let mut buf = Vec::new();
        file.write(&mut buf).unwrap();
        let back = ModelFile::read(buf.as_slice()).unwrap();
        assert_eq!(back, file);
    }

    #[test]
    fn wrong_schema_rejected() {
        let doc = br#"{"schema": "other/9"}"#;
        assert!(matches!(ModelFile::read(&doc[..]), Err(Error::SchemaMismatch(_))));
        assert!(matches!(ModelFile::read(&b"{}"[..]), Err(Error::SchemaMismatch(_))));
    }
}
