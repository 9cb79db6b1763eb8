//! Standardization, mean imputation, one-hot encoding and train/test splitting.
//!
//! Continuous columns are standardized with the mean and (population) standard
//! deviation of their observed entries; a missing entry becomes 0, which is the
//! same as imputing the mean before standardizing. Categorical columns expand
//! into one indicator per category seen at fit time.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{FeatureKind, SurvivalDataset, SurvivalRecord};
use crate::error::{Error, Result};
use crate::io::RawTable;

/// Raw feature cells, before or after transformation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub names: Vec<String>,
    pub rows: Vec<Vec<Option<String>>>,
    transformed: bool,
}

impl FeatureTable {
    pub fn new(names: Vec<String>, rows: Vec<Vec<Option<String>>>) -> Result<Self> {
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != names.len()) {
            return Err(Error::Parse(format!(
                "row {i} has {} cells, expected {}",
                r.len(),
                names.len()
            )));
        }
        Ok(Self {
            names,
            rows,
            transformed: false,
        })
    }

    /// The given columns of a raw table.
    pub fn from_raw(raw: &RawTable, columns: &[usize]) -> Self {
        Self {
            names: columns.iter().map(|&c| raw.columns[c].clone()).collect(),
            rows: raw
                .rows
                .iter()
                .map(|r| columns.iter().map(|&c| r[c].clone()).collect())
                .collect(),
            transformed: false,
        }
    }

    pub fn is_transformed(&self) -> bool {
        self.transformed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ColumnTransform {
    Continuous { name: String, mean: f64, sd: f64 },
    Categorical { name: String, categories: Vec<String> },
}

impl ColumnTransform {
    pub fn name(&self) -> &str {
        match self {
            Self::Continuous { name, .. } | Self::Categorical { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessModel {
    pub columns: Vec<ColumnTransform>,
}

/// Numeric output of [`transform`].
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedFeatures {
    pub names: Vec<String>,
    pub kinds: Vec<FeatureKind>,
    pub rows: Vec<Vec<f64>>,
}

impl TransformedFeatures {
    /// Back to a string table; such a table is refused by [`transform`].
    pub fn into_table(self) -> FeatureTable {
        FeatureTable {
            names: self.names,
            rows: self
                .rows
                .into_iter()
                .map(|r| r.into_iter().map(|v| Some(format!("{v}"))).collect())
                .collect(),
            transformed: true,
        }
    }
}

fn parse_cell(cell: &Option<String>) -> Option<std::result::Result<f64, ()>> {
    cell.as_deref()
        .map(|s| s.trim().parse::<f64>().map_err(|_| ()))
}

/// Fits per-column transforms. Columns listed in `categorical`, or containing any
/// non-numeric observed value, are one-hot encoded.
pub fn fit_preprocess(table: &FeatureTable, categorical: &[String]) -> Result<PreprocessModel> {
    if table.transformed {
        return Err(Error::SchemaMismatch(
            "table was already transformed; refit on raw data".into(),
        ));
    }
    let mut columns = Vec::with_capacity(table.names.len());
    for (c, name) in table.names.iter().enumerate() {
        let cells = table.rows.iter().map(|r| &r[c]);
        let forced = categorical.iter().any(|n| n == name);
        let any_text = cells
            .clone()
            .any(|cell| matches!(parse_cell(cell), Some(Err(()))));
        if forced || any_text {
            let mut cats: Vec<String> = cells
                .filter_map(|cell| cell.as_deref().map(|s| s.trim().to_string()))
                .collect();
            cats.sort();
            cats.dedup();
            columns.push(ColumnTransform::Categorical {
                name: name.clone(),
                categories: cats,
            });
            continue;
        }
        let observed: Vec<f64> = cells
            .filter_map(|cell| parse_cell(cell).and_then(|r| r.ok()))
            .filter(|v| v.is_finite())
            .collect();
        if observed.is_empty() {
            return Err(Error::NoObservedValues(name.clone()));
        }
        let n = observed.len() as f64;
        let mean = observed.iter().sum::<f64>() / n;
        let var = observed.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let mut sd = var.sqrt();
        if sd <= f64::EPSILON * mean.abs().max(1.0) {
            log::warn!("feature `{name}` has zero variance; using sd = 1");
            sd = 1.0;
        }
        columns.push(ColumnTransform::Continuous {
            name: name.clone(),
            mean,
            sd,
        });
    }
    Ok(PreprocessModel { columns })
}

impl PreprocessModel {
    pub fn output_names(&self) -> Vec<String> {
        self.output_schema().0
    }

    fn output_schema(&self) -> (Vec<String>, Vec<FeatureKind>) {
        let mut names = Vec::new();
        let mut kinds = Vec::new();
        for col in &self.columns {
            match col {
                ColumnTransform::Continuous { name, .. } => {
                    names.push(name.clone());
                    kinds.push(FeatureKind::Continuous);
                }
                ColumnTransform::Categorical { name, categories } => {
                    for cat in categories {
                        names.push(format!("{name}={cat}"));
                        kinds.push(FeatureKind::OneHot {
                            group: name.clone(),
                        });
                    }
                }
            }
        }
        (names, kinds)
    }
}

/// Applies a fitted model. Unseen categories map to an all-zero indicator group.
pub fn transform(model: &PreprocessModel, table: &FeatureTable) -> Result<TransformedFeatures> {
    if table.transformed {
        return Err(Error::SchemaMismatch(
            "table is already standardized; refusing to transform twice".into(),
        ));
    }
    let expected: Vec<&str> = model.columns.iter().map(ColumnTransform::name).collect();
    if expected.len() != table.names.len()
        || expected.iter().zip(&table.names).any(|(a, b)| a != b)
    {
        return Err(Error::SchemaMismatch(format!(
            "expected columns {expected:?}, got {:?}",
            table.names
        )));
    }
    let (names, kinds) = model.output_schema();
    let mut rows = Vec::with_capacity(table.rows.len());
    for (i, cells) in table.rows.iter().enumerate() {
        let mut out = Vec::with_capacity(names.len());
        for (col, cell) in model.columns.iter().zip(cells) {
            match col {
                ColumnTransform::Continuous { name, mean, sd } => match parse_cell(cell) {
                    None => out.push(0.0),
                    Some(Ok(v)) if v.is_finite() => out.push((v - mean) / sd),
                    Some(Ok(_)) => out.push(0.0),
                    Some(Err(())) => {
                        return Err(Error::InvalidCell {
                            row: i,
                            column: name.clone(),
                            reason: format!("`{}` is not numeric", cell.as_deref().unwrap_or("")),
                        })
                    }
                },
                ColumnTransform::Categorical { categories, .. } => {
                    let value = cell.as_deref().map(str::trim);
                    out.extend(
                        categories
                            .iter()
                            .map(|c| if Some(c.as_str()) == value { 1.0 } else { 0.0 }),
                    );
                }
            }
        }
        rows.push(out);
    }
    Ok(TransformedFeatures { names, kinds, rows })
}

/// Assembles a dataset from transformed features and outcomes.
pub fn build_dataset(
    features: TransformedFeatures,
    times: &[f64],
    events: &[bool],
) -> Result<SurvivalDataset> {
    if features.rows.len() != times.len() || times.len() != events.len() {
        return Err(Error::DimensionMismatch {
            expected: features.rows.len(),
            actual: times.len(),
        });
    }
    let records = features
        .rows
        .into_iter()
        .zip(times.iter().zip(events))
        .map(|(x, (&t, &e))| SurvivalRecord::new(x, t, e))
        .collect();
    SurvivalDataset::with_kinds(records, features.names, features.kinds)
}

/// Stratified (by event indicator) split of row indices into `(train, test)`.
///
/// The test side gets `round(n * test_fraction)` rows, allocated to the event and
/// censored strata in proportion. Both sides are guaranteed at least one
/// event, or an error is returned.
pub fn split_indices(
    events: &[bool],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n = events.len();
    if n < 2 {
        return Err(Error::DegenerateDataset("cannot split fewer than 2 records".into()));
    }
    let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    let mut ev: Vec<usize> = (0..n).filter(|&i| events[i]).collect();
    let mut ce: Vec<usize> = (0..n).filter(|&i| !events[i]).collect();
    if ev.len() < 2 {
        return Err(Error::DegenerateDataset(format!(
            "{} event(s) cannot be shared between train and test",
            ev.len()
        )));
    }
    let ev_test = ((n_test * ev.len()) as f64 / n as f64).round() as usize;
    let ev_test = ev_test.clamp(1, ev.len() - 1);
    let ce_test = n_test.saturating_sub(ev_test).min(ce.len());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ev.shuffle(&mut rng);
    ce.shuffle(&mut rng);
    let mut test: Vec<usize> = ev[..ev_test].iter().chain(&ce[..ce_test]).copied().collect();
    let mut train: Vec<usize> = ev[ev_test..].iter().chain(&ce[ce_test..]).copied().collect();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

/// Reproducible stratified split of a dataset into `(train, test)`.
pub fn train_test_split(
    dataset: &SurvivalDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(SurvivalDataset, SurvivalDataset)> {
    let (train, test) = split_indices(&dataset.events(), test_fraction, seed)?;
    Ok((dataset.subset(&train), dataset.subset(&test)))
}
