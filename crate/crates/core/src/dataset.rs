//! On-disk dataset layout: EHR CSV, schema JSON, one radiograph and one
//! bounding-box file per patient.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cohort::{load_cohort, CohortTable, FeatureSchema, LoadOptions};
use crate::error::{Error, Result};
use crate::exec::{map_slice, Execution};
use crate::imaging::{BBoxSet, ImageInput, ImageTensor};

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetPaths {
    pub ehr: PathBuf,
    pub schema: PathBuf,
    /// Directory of `<id>.png` (or `.jpg`) radiographs.
    pub images: PathBuf,
    /// Directory of `<id>.json` bounding-box sets.
    pub bboxes: PathBuf,
}

impl DatasetPaths {
    /// The standard layout under one directory.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            ehr: dir.join("ehr.csv"),
            schema: dir.join("schema.json"),
            images: dir.join("images"),
            bboxes: dir.join("bboxes"),
        }
    }

    /// Resolve relative paths against `base`.
    pub fn resolve(&self, base: &Path) -> Self {
        let r = |p: &PathBuf| if p.is_relative() { base.join(p) } else { p.clone() };
        Self { ehr: r(&self.ehr), schema: r(&self.schema), images: r(&self.images), bboxes: r(&self.bboxes) }
    }

    pub fn image_path(&self, id: &str) -> Option<PathBuf> {
        IMAGE_EXTENSIONS.iter().map(|e| self.images.join(format!("{id}.{e}"))).find(|p| p.is_file())
    }

    pub fn bbox_path(&self, id: &str) -> PathBuf {
        self.bboxes.join(format!("{id}.json"))
    }
}

pub fn load_schema(path: &Path) -> Result<FeatureSchema> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read schema {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Patient ids that have a radiograph in the image directory.
pub fn image_ids(dir: &Path) -> Result<BTreeSet<String>> {
    let mut ids = BTreeSet::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.insert(stem.to_string());
            }
        }
    }
    Ok(ids)
}

/// A loaded cohort with its radiographs, in table row order.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub table: CohortTable,
    pub images: Vec<ImageInput>,
}

/// Load only the EHR table, dropping patients without a radiograph.
pub fn load_table(paths: &DatasetPaths, provenance: &str, min_age: f64) -> Result<CohortTable> {
    let schema = load_schema(&paths.schema)?;
    let opts = LoadOptions {
        min_age,
        image_ids: Some(image_ids(&paths.images)?),
        provenance: provenance.to_string(),
        ..LoadOptions::default()
    };
    load_cohort(&paths.ehr, &schema, &opts)
}

/// Load the EHR table (dropping patients without a radiograph) and the
/// matching images and boxes. Patients without a box file get `boxes: None`.
pub fn load_dataset(paths: &DatasetPaths, provenance: &str, min_age: f64, exec: Execution) -> Result<Dataset> {
    let table = load_table(paths, provenance, min_age)?;
    let images = map_slice(exec, &table.ids, |id| -> Result<ImageInput> {
        let path = paths.image_path(id).expect("filtered on image presence");
        let bp = paths.bbox_path(id);
        Ok(ImageInput {
            patient_id: id.clone(),
            image: ImageTensor::load(&path)?,
            boxes: if bp.is_file() { Some(BBoxSet::load(&bp)?) } else { None },
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { table, images })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_cohort, SynthSpec};

    #[test]
    fn synthetic_dataset_roundtrip() {
        let spec = SynthSpec { n: 60, pos_rate: 0.3, seed: 3, excluded_rows: 2, ..SynthSpec::default() };
        let c = generate_cohort(&spec, Execution::Sequential).unwrap();
        let dir = tempfile::tempdir().unwrap();
        c.write(dir.path()).unwrap();
        let paths = DatasetPaths::in_dir(dir.path());
        std::fs::remove_file(paths.image_path("synth-00005").unwrap()).unwrap();
        std::fs::remove_file(paths.bbox_path("synth-00006")).unwrap();
        let d = load_dataset(&paths, "dev", 16.0, Execution::Sequential).unwrap();
        assert_eq!(d.table.len(), 59);
        assert_eq!(d.table.exclusions.missing_image, 1);
        assert_eq!(d.table.exclusions.total(), 3);
        let p6 = d.images.iter().find(|i| i.patient_id == "synth-00006").unwrap();
        assert!(p6.boxes.is_none());
        let p7 = d.images.iter().find(|i| i.patient_id == "synth-00007").unwrap();
        assert_eq!(p7.image, c.patients[7].image);
        assert_eq!(p7.boxes, Some(c.patients[7].boxes));
    }

    #[test]
    fn relative_paths_resolve() {
        let p = DatasetPaths::in_dir(Path::new("data")).resolve(Path::new("/cfg"));
        assert_eq!(p.ehr, PathBuf::from("/cfg/data/ehr.csv"));
        let abs = DatasetPaths::in_dir(Path::new("/abs")).resolve(Path::new("/cfg"));
        assert_eq!(abs.images, PathBuf::from("/abs/images"));
    }
}
