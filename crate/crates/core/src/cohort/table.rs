use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::schema::{ColumnKind, FeatureSchema};
use crate::error::{Error, Result};

/// One cell of the EHR table.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Missing,
    Num(f64),
    Text(String),
}

impl Cell {
    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Cell::Text(s) => Some(s),
            _ => None,
        }
    }
}

/// Rows removed while loading, by the first rule each row violated.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionCounts {
    pub under_age: usize,
    pub missing_admission: usize,
    pub missing_image: usize,
    pub missing_outcome: usize,
}

impl ExclusionCounts {
    pub fn total(&self) -> usize {
        self.under_age + self.missing_admission + self.missing_image + self.missing_outcome
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    /// Column holding patient age; rows with age at or below `min_age` are dropped.
    pub age_column: Option<String>,
    pub min_age: f64,
    /// Drop rows without an outcome (training sets).
    pub require_outcome: bool,
    /// When set, rows whose id has no admission image are dropped.
    pub image_ids: Option<BTreeSet<String>>,
    pub provenance: String,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            age_column: Some("age".into()),
            min_age: 16.0,
            require_outcome: true,
            image_ids: None,
            provenance: "unknown".into(),
        }
    }
}

/// Patient-keyed tabular cohort.
///
/// `rows[i][j]` is the cell of patient `ids[i]` in schema column `j`. Schema
/// columns that were absent from the source file are listed in `absent`
/// and hold `Cell::Missing` everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortTable {
    pub schema: FeatureSchema,
    pub ids: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub absent: BTreeSet<String>,
    pub provenance: String,
    pub exclusions: ExclusionCounts,
}

impl CohortTable {
    /// Build a table from in-memory rows, checking id uniqueness and outcome values.
    pub fn new(
        schema: FeatureSchema,
        rows: Vec<Vec<Cell>>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        let id_idx = schema.id_index();
        let out_idx = schema.outcome_index();
        let ncol = schema.columns().len();
        let mut ids = Vec::with_capacity(rows.len());
        for (r, row) in rows.iter().enumerate() {
            if row.len() != ncol {
                return Err(Error::InvalidInput(format!(
                    "row {r} has {} cells, schema has {ncol}",
                    row.len()
                )));
            }
            match &row[id_idx] {
                Cell::Text(s) if !s.is_empty() => ids.push(s.clone()),
                other => {
                    return Err(Error::BadCell {
                        row: r,
                        column: schema.columns()[id_idx].name.clone(),
                        value: format!("{other:?}"),
                    })
                }
            }
            match &row[out_idx] {
                Cell::Missing => {}
                Cell::Num(v) if *v == 0.0 || *v == 1.0 => {}
                other => {
                    return Err(Error::BadCell {
                        row: r,
                        column: schema.columns()[out_idx].name.clone(),
                        value: format!("{other:?}"),
                    })
                }
            }
        }
        check_unique(&ids)?;
        Ok(Self {
            schema,
            ids,
            rows,
            absent: BTreeSet::new(),
            provenance: provenance.into(),
            exclusions: ExclusionCounts::default(),
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let j = self.schema.index_of(name)?;
        Some(self.rows.iter().map(|r| &r[j]).collect())
    }

    pub fn numeric_column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        self.column(name)
            .map(|c| c.into_iter().map(Cell::as_num).collect())
    }

    /// Outcome per row (0 alive, 1 expired) when recorded.
    pub fn outcomes(&self) -> Vec<Option<u8>> {
        let j = self.schema.outcome_index();
        self.rows
            .iter()
            .map(|r| r[j].as_num().map(|v| v as u8))
            .collect()
    }

    /// Outcomes, failing if any row lacks one.
    pub fn labels(&self) -> Result<Vec<u8>> {
        self.outcomes()
            .into_iter()
            .enumerate()
            .map(|(i, o)| {
                o.ok_or_else(|| {
                    Error::InvalidInput(format!("patient {} has no outcome", self.ids[i]))
                })
            })
            .collect()
    }

    /// Keep only the rows whose index satisfies `keep`.
    pub fn filter_rows(&self, mut keep: impl FnMut(usize) -> bool) -> CohortTable {
        let mut out = self.clone();
        out.ids.clear();
        out.rows.clear();
        for i in 0..self.len() {
            if keep(i) {
                out.ids.push(self.ids[i].clone());
                out.rows.push(self.rows[i].clone());
            }
        }
        out
    }

    pub fn is_present(&self, column: &str) -> bool {
        self.schema.index_of(column).is_some() && !self.absent.contains(column)
    }
}

fn check_unique(ids: &[String]) -> Result<()> {
    let mut seen = BTreeMap::<&str, usize>::new();
    for id in ids {
        *seen.entry(id).or_default() += 1;
    }
    let dups: Vec<String> = seen
        .into_iter()
        .filter(|(_, n)| *n > 1)
        .map(|(k, _)| k.to_string())
        .collect();
    if dups.is_empty() {
        Ok(())
    } else {
        Err(Error::DuplicateIds(dups))
    }
}

fn parse_cell(raw: &str, kind: ColumnKind, row: usize, column: &str) -> Result<Cell> {
    let s = raw.trim();
    if s.is_empty() {
        return Ok(Cell::Missing);
    }
    let bad = || Error::BadCell {
        row,
        column: column.to_string(),
        value: raw.to_string(),
    };
    match kind {
        ColumnKind::Numeric | ColumnKind::Vital => {
            let v: f64 = s.parse().map_err(|_| bad())?;
            if !v.is_finite() {
                return Err(bad());
            }
            Ok(Cell::Num(v))
        }
        ColumnKind::Outcome => match s {
            "0" | "0.0" => Ok(Cell::Num(0.0)),
            "1" | "1.0" => Ok(Cell::Num(1.0)),
            _ => Err(bad()),
        },
        ColumnKind::Categorical | ColumnKind::Id | ColumnKind::AdmissionTime => {
            Ok(Cell::Text(s.to_string()))
        }
    }
}

/// Load a comma-delimited EHR file and apply the exclusion rules.
pub fn load_cohort(path: &Path, schema: &FeatureSchema, opts: &LoadOptions) -> Result<CohortTable> {
    let file = std::fs::File::open(path)?;
    load_cohort_from_reader(file, path, schema, opts)
}

pub fn load_cohort_from_reader<R: Read>(
    reader: R,
    path: &Path,
    schema: &FeatureSchema,
    opts: &LoadOptions,
) -> Result<CohortTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let malformed = |reason: String| Error::MalformedHeader {
        path: path.to_path_buf(),
        reason,
    };

    // header position -> schema index
    let mut mapping = Vec::with_capacity(header.len());
    let mut seen = BTreeSet::new();
    for name in header.iter() {
        let name = name.trim();
        let idx = schema
            .index_of(name)
            .ok_or_else(|| malformed(format!("unknown column '{name}'")))?;
        if !seen.insert(idx) {
            return Err(malformed(format!("column '{name}' appears twice")));
        }
        mapping.push(idx);
    }
    let id_idx = schema.id_index();
    let out_idx = schema.outcome_index();
    if !seen.contains(&id_idx) {
        return Err(malformed("id column missing".into()));
    }
    if opts.require_outcome && !seen.contains(&out_idx) {
        return Err(malformed("outcome column missing".into()));
    }
    let absent: BTreeSet<String> = schema
        .columns()
        .iter()
        .enumerate()
        .filter(|(i, _)| !seen.contains(i))
        .map(|(_, c)| c.name.clone())
        .collect();

    let ncol = schema.columns().len();
    let mut rows = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let mut row = vec![Cell::Missing; ncol];
        for (pos, raw) in record.iter().enumerate() {
            let j = mapping[pos];
            let spec = &schema.columns()[j];
            row[j] = parse_cell(raw, spec.kind, r, &spec.name)?;
        }
        rows.push(row);
    }

    let ids: Vec<String> = rows
        .iter()
        .enumerate()
        .map(|(r, row)| match &row[id_idx] {
            Cell::Text(s) => Ok(s.clone()),
            _ => Err(Error::BadCell {
                row: r,
                column: schema.columns()[id_idx].name.clone(),
                value: String::new(),
            }),
        })
        .collect::<Result<_>>()?;
    check_unique(&ids)?;

    let age_idx = opts.age_column.as_deref().and_then(|a| schema.index_of(a));
    let adm_idx = schema
        .admission_index()
        .filter(|i| seen.contains(i));
    let mut exclusions = ExclusionCounts::default();
    let mut kept_ids = Vec::new();
    let mut kept_rows = Vec::new();
    for (id, row) in ids.into_iter().zip(rows) {
        if let Some(a) = age_idx.and_then(|j| row[j].as_num()) {
            if a <= opts.min_age {
                exclusions.under_age += 1;
                continue;
            }
        }
        if let Some(j) = adm_idx {
            if row[j].is_missing() {
                exclusions.missing_admission += 1;
                continue;
            }
        }
        if let Some(images) = &opts.image_ids {
            if !images.contains(&id) {
                exclusions.missing_image += 1;
                continue;
            }
        }
        if opts.require_outcome && row[out_idx].is_missing() {
            exclusions.missing_outcome += 1;
            continue;
        }
        kept_ids.push(id);
        kept_rows.push(row);
    }
    if exclusions.total() > 0 {
        log::info!("{}: excluded {:?}", path.display(), exclusions);
    }

    Ok(CohortTable {
        schema: schema.clone(),
        ids: kept_ids,
        rows: kept_rows,
        absent,
        provenance: opts.provenance.clone(),
        exclusions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::schema::ColumnSpec;

    fn schema() -> FeatureSchema {
        FeatureSchema::new(vec![
            ColumnSpec::new("id", ColumnKind::Id, ""),
            ColumnSpec::new("admission_time", ColumnKind::AdmissionTime, ""),
            ColumnSpec::new("age", ColumnKind::Numeric, "years"),
            ColumnSpec::new("sex", ColumnKind::Categorical, ""),
            ColumnSpec::new("expired", ColumnKind::Outcome, ""),
        ])
        .unwrap()
    }

    fn load(text: &str, opts: &LoadOptions) -> Result<CohortTable> {
        load_cohort_from_reader(text.as_bytes(), Path::new("mem.csv"), &schema(), opts)
    }

    #[test]
    fn under_age_rows_are_excluded() {
        let csv = "id,admission_time,age,sex,expired\n\
                   a,t,40,M,0\nb,t,14,F,0\nc,t,70,F,1\nd,t,33,M,0\ne,t,52,,1\n";
        let t = load(csv, &LoadOptions::default()).unwrap();
        assert_eq!(t.len(), 4);
        assert_eq!(t.exclusions.under_age, 1);
        assert_eq!(t.exclusions.total(), 1);
        assert!(t.rows[3][3].is_missing());
    }

    #[test]
    fn age_sixteen_is_excluded() {
        let csv = "id,admission_time,age,sex,expired\na,t,16,M,0\nb,t,16.5,M,0\n";
        let t = load(csv, &LoadOptions::default()).unwrap();
        assert_eq!(t.ids, vec!["b"]);
    }

    #[test]
    fn duplicate_ids_are_listed() {
        let csv = "id,admission_time,age,sex,expired\nx,t,40,M,0\nx,t,41,F,1\n";
        match load(csv, &LoadOptions::default()) {
            Err(Error::DuplicateIds(ids)) => assert_eq!(ids, vec!["x".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_cell_reports_location() {
        let csv = "id,admission_time,age,sex,expired\nx,t,forty,M,0\n";
        match load(csv, &LoadOptions::default()) {
            Err(Error::BadCell { row, column, .. }) => {
                assert_eq!(row, 0);
                assert_eq!(column, "age");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_header_is_malformed() {
        let csv = "id,admission_time,age,height,expired\nx,t,40,170,0\n";
        assert!(matches!(
            load(csv, &LoadOptions::default()),
            Err(Error::MalformedHeader { .. })
        ));
    }

    #[test]
    fn absent_columns_are_recorded() {
        let csv = "id,admission_time,age,expired\nx,t,40,0\n";
        let t = load(csv, &LoadOptions::default()).unwrap();
        assert!(t.absent.contains("sex"));
        assert!(!t.is_present("sex"));
    }

    #[test]
    fn missing_outcome_and_image_rules() {
        let csv = "id,admission_time,age,sex,expired\na,t,40,M,\nb,,50,M,1\nc,t,60,F,1\nd,t,70,F,0\n";
        let mut opts = LoadOptions::default();
        opts.image_ids = Some(["a", "b", "c"].iter().map(|s| s.to_string()).collect());
        let t = load(csv, &opts).unwrap();
        assert_eq!(t.ids, vec!["c"]);
        assert_eq!(
            t.exclusions,
            ExclusionCounts {
                under_age: 0,
                missing_admission: 1,
                missing_image: 1,
                missing_outcome: 1
            }
        );
    }
}
