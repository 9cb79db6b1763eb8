//! Loading tables and turning them into preprocessed datasets.

use std::path::Path;

use survstack::data::{parse_outcomes, EVENT_COLUMN, TIME_COLUMN};
use survstack::io::RawTable;
use survstack::preprocess::{build_dataset, fit_preprocess, transform, FeatureTable, PreprocessModel};
use survstack::synth::TruthOracle;
use survstack::{Error, SurvivalDataset, SurvivalRecord};

use crate::{CliError, StageExt};

/// A raw table with its outcome columns parsed.
pub struct Loaded {
    pub raw: RawTable,
    pub times: Vec<f64>,
    pub events: Vec<bool>,
    pub feature_cols: Vec<usize>,
}

pub fn read_table(path: &Path) -> Result<RawTable, CliError> {
    if !path.exists() {
        return Err(CliError::Usage(format!("input {} does not exist", path.display())));
    }
    RawTable::read_path(path).stage("load")
}

pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let raw = read_table(path)?;
    let (times, events, feature_cols) = parse_outcomes(&raw).stage("load")?;
    log::info!(
        "loaded {}: {} rows, {} feature columns, {} events",
        path.display(),
        raw.rows.len(),
        feature_cols.len(),
        events.iter().filter(|&&e| e).count()
    );
    Ok(Loaded {
        raw,
        times,
        events,
        feature_cols,
    })
}

/// Indices of all columns other than `time` and `event`.
pub fn non_outcome_columns(raw: &RawTable) -> Vec<usize> {
    (0..raw.columns.len())
        .filter(|&c| raw.columns[c] != TIME_COLUMN && raw.columns[c] != EVENT_COLUMN)
        .collect()
}

impl Loaded {
    fn features(&self, rows: &[usize]) -> FeatureTable {
        FeatureTable::from_raw(&self.raw.subset_rows(rows), &self.feature_cols)
    }

    fn dataset(&self, pm: &PreprocessModel, rows: &[usize]) -> Result<SurvivalDataset, CliError> {
        let tf = transform(pm, &self.features(rows)).stage("preprocess")?;
        let times: Vec<f64> = rows.iter().map(|&i| self.times[i]).collect();
        let events: Vec<bool> = rows.iter().map(|&i| self.events[i]).collect();
        build_dataset(tf, &times, &events).stage("preprocess")
    }

    /// Fits preprocessing on `train_rows` and applies it to both sides.
    pub fn prepare(
        &self,
        train_rows: &[usize],
        test_rows: &[usize],
        categorical: &[String],
    ) -> Result<(PreprocessModel, SurvivalDataset, SurvivalDataset), CliError> {
        let pm = fit_preprocess(&self.features(train_rows), categorical).stage("preprocess")?;
        let train = self.dataset(&pm, train_rows)?;
        let test = self.dataset(&pm, test_rows)?;
        log::info!(
            "preprocess: {} raw columns -> {} model columns",
            self.feature_cols.len(),
            train.n_features()
        );
        Ok((pm, train, test))
    }

    pub fn prepare_all(&self, categorical: &[String]) -> Result<(PreprocessModel, SurvivalDataset), CliError> {
        let all: Vec<usize> = (0..self.times.len()).collect();
        let pm = fit_preprocess(&self.features(&all), categorical).stage("preprocess")?;
        let ds = self.dataset(&pm, &all)?;
        Ok((pm, ds))
    }

    /// Raw covariates of `rows` in the column order the oracle expects.
    pub fn oracle_covariates(&self, oracle: &TruthOracle, rows: &[usize]) -> Result<Vec<Vec<f64>>, CliError> {
        let names = survstack::synth::feature_names(oracle.spec.d);
        let cols: Vec<usize> = names
            .iter()
            .map(|n| self.raw.column_index(n).ok_or_else(|| Error::MissingColumn(n.clone())))
            .collect::<Result<_, _>>()
            .stage("truth")?;
        rows.iter()
            .map(|&i| {
                cols.iter()
                    .map(|&c| {
                        self.raw.rows[i][c]
                            .as_deref()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| Error::Parse(format!("row {i}: truth covariate is not numeric")))
                    })
                    .collect::<Result<Vec<f64>, _>>()
                    .stage("truth")
            })
            .collect()
    }
}

/// Outcome-only dataset (no covariates), enough for censoring weights and metrics.
pub fn outcomes_only(path: &Path) -> Result<SurvivalDataset, CliError> {
    let l = load(path)?;
    let records = l
        .times
        .iter()
        .zip(&l.events)
        .map(|(&t, &e)| SurvivalRecord::new(Vec::new(), t, e))
        .collect();
    SurvivalDataset::new(records, Vec::new()).stage("load")
}

pub fn read_truth(path: &Path) -> Result<TruthOracle, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read truth sidecar {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Sorted copy for quantiles.
pub fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}
