use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::schema::ColumnKind;
use super::table::{Cell, CohortTable};
use crate::error::{Error, Result};

/// Inclusive valid range per vital sign, in native units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, (f64, f64)>", into = "BTreeMap<String, (f64, f64)>")]
pub struct VitalRanges {
    ranges: BTreeMap<String, (f64, f64)>,
}

impl TryFrom<BTreeMap<String, (f64, f64)>> for VitalRanges {
    type Error = Error;
    fn try_from(ranges: BTreeMap<String, (f64, f64)>) -> Result<Self> {
        VitalRanges::new(ranges)
    }
}

impl From<VitalRanges> for BTreeMap<String, (f64, f64)> {
    fn from(v: VitalRanges) -> Self {
        v.ranges
    }
}

impl VitalRanges {
    pub fn new(ranges: BTreeMap<String, (f64, f64)>) -> Result<Self> {
        for (name, (lo, hi)) in &ranges {
            if !(lo < hi) {
                return Err(Error::InvalidInput(format!(
                    "vital range for '{name}' has low {lo} >= high {hi}"
                )));
            }
        }
        Ok(Self { ranges })
    }

    pub fn get(&self, name: &str) -> Option<(f64, f64)> {
        self.ranges.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &(f64, f64))> {
        self.ranges.iter()
    }
}

impl Default for VitalRanges {
    /// Temperature 30-45 C, SpO2 1-100 %, heart rate 20-300 bpm, systolic BP 20-240 mmHg.
    fn default() -> Self {
        let ranges = [
            ("temperature", (30.0, 45.0)),
            ("spo2", (1.0, 100.0)),
            ("heart_rate", (20.0, 300.0)),
            ("systolic_bp", (20.0, 240.0)),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self { ranges }
    }
}

/// Replace out-of-range vital values with missing. Returns the cleaned table
/// and the number of replaced cells. Ranges naming vitals absent from the
/// schema are ignored; ranges on a non-vital column are an error.
pub fn clip_vitals(table: &CohortTable, ranges: &VitalRanges) -> Result<(CohortTable, usize)> {
    let mut targets = Vec::new();
    for (name, &(lo, hi)) in ranges.iter() {
        match table.schema.get(name) {
            Some(spec) if spec.kind == ColumnKind::Vital => {
                targets.push((table.schema.index_of(name).unwrap(), lo, hi));
            }
            Some(spec) => {
                return Err(Error::InvalidInput(format!(
                    "range given for '{name}', which is {:?}, not a vital",
                    spec.kind
                )))
            }
            None => {}
        }
    }
    let mut out = table.clone();
    let mut replaced = 0;
    for row in &mut out.rows {
        for &(j, lo, hi) in &targets {
            if let Cell::Num(v) = row[j] {
                if v < lo || v > hi {
                    row[j] = Cell::Missing;
                    replaced += 1;
                }
            }
        }
    }
    Ok((out, replaced))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::schema::{ColumnSpec, FeatureSchema};

    fn table(vals: &[(f64, f64, f64, f64)]) -> CohortTable {
        let schema = FeatureSchema::new(vec![
            ColumnSpec::new("id", ColumnKind::Id, ""),
            ColumnSpec::new("temperature", ColumnKind::Vital, "C"),
            ColumnSpec::new("heart_rate", ColumnKind::Vital, "bpm"),
            ColumnSpec::new("spo2", ColumnKind::Vital, "%"),
            ColumnSpec::new("systolic_bp", ColumnKind::Vital, "mmHg"),
            ColumnSpec::new("crp", ColumnKind::Numeric, "mg/L"),
            ColumnSpec::new("expired", ColumnKind::Outcome, ""),
        ])
        .unwrap();
        let rows = vals
            .iter()
            .enumerate()
            .map(|(i, &(t, h, s, b))| {
                vec![
                    Cell::Text(format!("p{i}")),
                    Cell::Num(t),
                    Cell::Num(h),
                    Cell::Num(s),
                    Cell::Num(b),
                    Cell::Num(1000.0),
                    Cell::Num(0.0),
                ]
            })
            .collect();
        CohortTable::new(schema, rows, "test").unwrap()
    }

    #[test]
    fn clips_out_of_range() {
        let t = table(&[(36.8, 350.0, 101.0, 250.0), (37.0, 80.0, 95.0, 120.0)]);
        let (c, n) = clip_vitals(&t, &VitalRanges::default()).unwrap();
        assert_eq!(n, 3);
        assert_eq!(c.rows[0][1], Cell::Num(36.8));
        assert!(c.rows[0][2].is_missing());
        assert!(c.rows[0][3].is_missing());
        assert!(c.rows[0][4].is_missing());
        assert_eq!(c.rows[1], t.rows[1]);
    }

    #[test]
    fn bounds_are_inclusive() {
        let t = table(&[(30.0, 300.0, 100.0, 20.0)]);
        let (_, n) = clip_vitals(&t, &VitalRanges::default()).unwrap();
        assert_eq!(n, 0);
    }

    #[test]
    fn non_vital_range_is_rejected() {
        let t = table(&[(36.0, 80.0, 95.0, 120.0)]);
        let mut m = BTreeMap::new();
        m.insert("crp".to_string(), (0.0, 10.0));
        assert!(clip_vitals(&t, &VitalRanges::new(m).unwrap()).is_err());
    }

    #[test]
    fn inverted_range_is_rejected() {
        let mut m = BTreeMap::new();
        m.insert("spo2".to_string(), (100.0, 1.0));
        assert!(VitalRanges::new(m).is_err());
    }
}
