use std::io::{Read, Write};

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};

/// Row-aligned numeric design matrix with column names, patient ids and outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub columns: Vec<String>,
    pub ids: Vec<String>,
    pub values: Array2<f64>,
    pub outcome: Vec<Option<u8>>,
}

impl FeatureMatrix {
    pub fn new(
        columns: Vec<String>,
        ids: Vec<String>,
        values: Array2<f64>,
        outcome: Vec<Option<u8>>,
    ) -> Result<Self> {
        if values.ncols() != columns.len() {
            return Err(Error::InvalidInput(format!(
                "{} columns named but matrix has {}",
                columns.len(),
                values.ncols()
            )));
        }
        if values.nrows() != ids.len() || ids.len() != outcome.len() {
            return Err(Error::InvalidInput("row count mismatch".into()));
        }
        Ok(Self {
            columns,
            ids,
            values,
            outcome,
        })
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn labels(&self) -> Result<Vec<u8>> {
        self.outcome
            .iter()
            .enumerate()
            .map(|(i, o)| {
                o.ok_or_else(|| Error::InvalidInput(format!("row {} has no outcome", self.ids[i])))
            })
            .collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            columns: self.columns.clone(),
            ids: rows.iter().map(|&r| self.ids[r].clone()).collect(),
            values: self.values.select(Axis(0), rows),
            outcome: rows.iter().map(|&r| self.outcome[r]).collect(),
        }
    }

    /// CSV with header `id,<columns...>,outcome`; floats use shortest round-trip form.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["id".to_string()];
        header.extend(self.columns.iter().cloned());
        header.push("outcome".into());
        wtr.write_record(&header)?;
        for (i, row) in self.values.outer_iter().enumerate() {
            let mut rec = Vec::with_capacity(row.len() + 2);
            rec.push(self.ids[i].clone());
            rec.extend(row.iter().map(|v| format!("{v:?}")));
            rec.push(self.outcome[i].map(|o| o.to_string()).unwrap_or_default());
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        if header.len() < 2 || &header[0] != "id" || &header[header.len() - 1] != "outcome" {
            return Err(Error::InvalidInput("feature matrix header must be id,...,outcome".into()));
        }
        let columns: Vec<String> = header.iter().skip(1).take(header.len() - 2).map(String::from).collect();
        let mut ids = Vec::new();
        let mut flat = Vec::new();
        let mut outcome = Vec::new();
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec?;
            ids.push(rec[0].to_string());
            for (j, raw) in rec.iter().enumerate().skip(1).take(columns.len()) {
                flat.push(raw.parse::<f64>().map_err(|_| Error::BadCell {
                    row: r,
                    column: columns[j - 1].clone(),
                    value: raw.to_string(),
                })?);
            }
            let o = &rec[rec.len() - 1];
            outcome.push(if o.is_empty() {
                None
            } else {
                Some(o.parse::<u8>().map_err(|_| Error::BadCell {
                    row: r,
                    column: "outcome".into(),
                    value: o.to_string(),
                })?)
            });
        }
        let values = Array2::from_shape_vec((ids.len(), columns.len()), flat)
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        FeatureMatrix::new(columns, ids, values, outcome)
    }
}
