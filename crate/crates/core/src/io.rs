//! Comma-separated text input and output.
//!
//! Tables have a header row; missing values are empty fields. Numbers are
//! written with Rust's shortest round-trip formatting so outputs are
//! byte-stable across runs.

use std::io::{Read, Write};
use std::path::Path;

use crate::data::{SurvivalDataset, EVENT_COLUMN, TIME_COLUMN};
use crate::error::{Error, Result};
use crate::stacking::{StackedDataset, LABEL_COLUMN, STACK_TIME_COLUMN};
use crate::step::SurvivalCurve;

/// Header plus string cells; `None` marks an empty (missing) field.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<String>>>,
}

impl RawTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let columns: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if columns.is_empty() {
            return Err(Error::Parse("empty header".into()));
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse(format!("data row {i}: {e}")))?;
            rows.push(
                rec.iter()
                    .map(|s| if s.is_empty() { None } else { Some(s.to_string()) })
                    .collect(),
            );
        }
        Ok(Self { columns, rows })
    }

    pub fn read_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::from_reader(std::io::BufReader::new(f))
    }

    /// Rows restricted to the given indices.
    pub fn subset_rows(&self, indices: &[usize]) -> Self {
        Self {
            columns: self.columns.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Writes a dataset as `features..., time, event`.
pub fn write_dataset<W: Write>(dataset: &SurvivalDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = dataset.feature_names().iter().map(String::as_str).collect();
    header.push(TIME_COLUMN);
    header.push(EVENT_COLUMN);
    w.write_record(&header)?;
    for r in dataset.records() {
        let mut row: Vec<String> = r.covariates.iter().map(|&v| fmt(v)).collect();
        row.push(fmt(r.time));
        row.push(if r.event { "1" } else { "0" }.into());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes stacked rows as `features..., stack_time, label`.
pub fn write_stacked<W: Write>(stacked: &StackedDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = stacked.feature_names[..stacked.feature_names.len() - 1]
        .iter()
        .map(String::as_str)
        .collect();
    header.push(STACK_TIME_COLUMN);
    header.push(LABEL_COLUMN);
    w.write_record(&header)?;
    for (row, &label) in stacked.rows.iter().zip(&stacked.labels) {
        let mut out: Vec<String> = row.iter().map(|&v| fmt(v)).collect();
        out.push(if label { "1" } else { "0" }.into());
        w.write_record(&out)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes curves as `patient_id, time, survival_prob`.
pub fn write_curves<W: Write>(curves: &[SurvivalCurve], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["patient_id", "time", "survival_prob"])?;
    for (id, c) in curves.iter().enumerate() {
        for (t, s) in c.times.iter().zip(&c.probabilities) {
            w.write_record([id.to_string(), fmt(*t), fmt(*s)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads curves written by [`write_curves`]; patients must be contiguous and share one grid.
pub fn read_curves<R: Read>(reader: R) -> Result<Vec<SurvivalCurve>> {
    let table = RawTable::from_reader(reader)?;
    let idx = |name: &str| {
        table
            .column_index(name)
            .ok_or_else(|| Error::MissingColumn(name.into()))
    };
    let (pc, tc, sc) = (idx("patient_id")?, idx("time")?, idx("survival_prob")?);
    let num = |row: usize, c: usize| -> Result<f64> {
        table.rows[row][c]
            .as_deref()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse(format!("curve row {row}: bad numeric field")))
    };
    let mut curves: Vec<SurvivalCurve> = Vec::new();
    let mut current: Option<String> = None;
    for row in 0..table.rows.len() {
        let id = table.rows[row][pc].clone().unwrap_or_default();
        if current.as_deref() != Some(id.as_str()) {
            curves.push(SurvivalCurve {
                times: Vec::new(),
                probabilities: Vec::new(),
            });
            current = Some(id);
        }
        let c = curves.last_mut().expect("pushed above");
        c.times.push(num(row, tc)?);
        c.probabilities.push(num(row, sc)?);
    }
    if let Some(first) = curves.first() {
        if curves.iter().any(|c| c.times != first.times) {
            return Err(Error::SchemaMismatch("curves do not share one time grid".into()));
        }
    }
    Ok(curves)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_missing_as_none() {
        let t = RawTable::from_reader("a,b,time,event\n1,,2,1\n,x,3,0\n".as_bytes()).unwrap();
        assert_eq!(t.columns, vec!["a", "b", "time", "event"]);
        assert_eq!(t.rows[0][1], None);
        assert_eq!(t.rows[1][1].as_deref(), Some("x"));
    }

    #[test]
    fn ragged_rows_are_parse_errors() {
        let e = RawTable::from_reader("a,time,event\n1,2\n".as_bytes()).unwrap_err();
        assert!(matches!(e, Error::Parse(_)), "{e:?}");
    }

    #[test]
    fn curves_round_trip() {
        let curves = vec![
            SurvivalCurve {
                times: vec![1.0, 2.0],
                probabilities: vec![0.9, 0.5],
            },
            SurvivalCurve {
                times: vec![1.0, 2.0],
                probabilities: vec![1.0, 0.25],
            },
        ];
        let mut buf = Vec::new();
        write_curves(&curves, &mut buf).unwrap();
        assert_eq!(read_curves(buf.as_slice()).unwrap(), curves);
    }
}
