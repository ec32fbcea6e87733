use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Categorical,
    Numeric,
    Vital,
    Outcome,
    Id,
    AdmissionTime,
}

impl ColumnKind {
    /// Numeric and vital columns are both scaled as continuous features.
    pub fn is_continuous(self) -> bool {
        matches!(self, ColumnKind::Numeric | ColumnKind::Vital)
    }

    pub fn is_feature(self) -> bool {
        matches!(
            self,
            ColumnKind::Categorical | ColumnKind::Numeric | ColumnKind::Vital
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default)]
    pub unit: String,
}

impl ColumnSpec {
    pub fn new(name: impl Into<String>, kind: ColumnKind, unit: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind,
            unit: unit.into(),
        }
    }
}

/// Ordered column declarations for an EHR table.
///
/// Exactly one id column and one outcome column; names are unique.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SchemaRepr", into = "SchemaRepr")]
pub struct FeatureSchema {
    columns: Vec<ColumnSpec>,
}

#[derive(Serialize, Deserialize)]
struct SchemaRepr {
    columns: Vec<ColumnSpec>,
}

impl TryFrom<SchemaRepr> for FeatureSchema {
    type Error = Error;
    fn try_from(r: SchemaRepr) -> Result<Self> {
        FeatureSchema::new(r.columns)
    }
}

impl From<FeatureSchema> for SchemaRepr {
    fn from(s: FeatureSchema) -> Self {
        SchemaRepr { columns: s.columns }
    }
}

impl FeatureSchema {
    pub fn new(columns: Vec<ColumnSpec>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for c in &columns {
            if c.name.is_empty() {
                return Err(Error::Schema("empty column name".into()));
            }
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column name '{}'", c.name)));
            }
        }
        for kind in [ColumnKind::Id, ColumnKind::Outcome] {
            let n = columns.iter().filter(|c| c.kind == kind).count();
            if n != 1 {
                return Err(Error::Schema(format!(
                    "expected exactly one {kind:?} column, found {n}"
                )));
            }
        }
        if columns
            .iter()
            .filter(|c| c.kind == ColumnKind::AdmissionTime)
            .count()
            > 1
        {
            return Err(Error::Schema("more than one admission_time column".into()));
        }
        Ok(Self { columns })
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }

    fn index_of_kind(&self, kind: ColumnKind) -> Option<usize> {
        self.columns.iter().position(|c| c.kind == kind)
    }

    pub fn id_index(&self) -> usize {
        self.index_of_kind(ColumnKind::Id).expect("validated")
    }

    pub fn outcome_index(&self) -> usize {
        self.index_of_kind(ColumnKind::Outcome).expect("validated")
    }

    pub fn admission_index(&self) -> Option<usize> {
        self.index_of_kind(ColumnKind::AdmissionTime)
    }

    pub fn feature_columns(&self) -> impl Iterator<Item = &ColumnSpec> {
        self.columns.iter().filter(|c| c.kind.is_feature())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> Vec<ColumnSpec> {
        vec![
            ColumnSpec::new("id", ColumnKind::Id, ""),
            ColumnSpec::new("age", ColumnKind::Numeric, "years"),
            ColumnSpec::new("expired", ColumnKind::Outcome, ""),
        ]
    }

    #[test]
    fn accepts_valid_schema() {
        let s = FeatureSchema::new(base()).unwrap();
        assert_eq!(s.id_index(), 0);
        assert_eq!(s.outcome_index(), 2);
        assert_eq!(s.feature_columns().count(), 1);
    }

    #[test]
    fn rejects_duplicates_and_missing_outcome() {
        let mut cols = base();
        cols.push(ColumnSpec::new("age", ColumnKind::Numeric, ""));
        assert!(FeatureSchema::new(cols).is_err());
        let cols: Vec<_> = base().into_iter().filter(|c| c.kind != ColumnKind::Outcome).collect();
        assert!(FeatureSchema::new(cols).is_err());
    }

    #[test]
    fn json_roundtrip_validates() {
        let s = FeatureSchema::new(base()).unwrap();
        let txt = serde_json::to_string(&s).unwrap();
        let back: FeatureSchema = serde_json::from_str(&txt).unwrap();
        assert_eq!(s, back);
        let bad = r#"{"columns":[{"name":"id","kind":"id"}]}"#;
        assert!(serde_json::from_str::<FeatureSchema>(bad).is_err());
    }
}
