use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::augment::{apply_bbox_variant, AugmentVariant};
use super::bbox::BBoxSet;
use super::tensor::ImageTensor;
use crate::error::{Error, Result};
use crate::exec::{map_slice, Execution};
use crate::rng::{patient_seed, Rng};

/// The five stored views of one patient's radiograph.
#[derive(Debug, Clone, PartialEq)]
pub struct StoreEntry {
    pub boxes: BBoxSet,
    pub views: [ImageTensor; 5],
}

impl StoreEntry {
    pub fn view(&self, v: AugmentVariant) -> &ImageTensor {
        &self.views[v.index()]
    }

    pub fn original(&self) -> &ImageTensor {
        self.view(AugmentVariant::Original)
    }
}

/// Offline-augmented image store keyed by patient id.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageStore {
    pub global_seed: u64,
    entries: BTreeMap<String, StoreEntry>,
}

/// One input radiograph for store construction.
#[derive(Debug, Clone)]
pub struct ImageInput {
    pub patient_id: String,
    pub image: ImageTensor,
    pub boxes: Option<BBoxSet>,
}

#[derive(Serialize, Deserialize)]
struct IndexEntry {
    id: String,
    height: usize,
    width: usize,
    boxes: BBoxSet,
    views: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct StoreIndex {
    version: u32,
    global_seed: u64,
    patients: Vec<IndexEntry>,
}

/// Precompute the five views for every image. Noise seeds are
/// `global_seed XOR fnv1a(patient_id)`, so the store is reproducible and
/// independent of input order and thread count.
pub fn precompute_variants(
    inputs: &[ImageInput],
    global_seed: u64,
    exec: Execution,
) -> Result<ImageStore> {
    for inp in inputs {
        if inp.boxes.is_none() {
            return Err(Error::Precondition(format!(
                "patient {} has no bounding-box set",
                inp.patient_id
            )));
        }
    }
    let built: Vec<Result<(String, StoreEntry)>> = map_slice(exec, inputs, |inp| {
        let boxes = inp.boxes.expect("checked");
        let seed = patient_seed(global_seed, &inp.patient_id);
        let mut views = Vec::with_capacity(5);
        for v in AugmentVariant::ALL {
            views.push(apply_bbox_variant(&inp.image, &boxes, v, seed)?);
        }
        let views: [ImageTensor; 5] = views.try_into().expect("five views");
        Ok((inp.patient_id.clone(), StoreEntry { boxes, views }))
    });
    let mut entries = BTreeMap::new();
    for b in built {
        let (id, e) = b?;
        if entries.insert(id.clone(), e).is_some() {
            return Err(Error::DuplicateIds(vec![id]));
        }
    }
    Ok(ImageStore {
        global_seed,
        entries,
    })
}

impl ImageStore {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of stored views (five per patient).
    pub fn view_count(&self) -> usize {
        self.entries.len() * 5
    }

    pub fn get(&self, patient_id: &str) -> Result<&StoreEntry> {
        self.entries
            .get(patient_id)
            .ok_or_else(|| Error::InvalidInput(format!("unknown patient id '{patient_id}'")))
    }

    pub fn ids(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    /// Write `<dir>/<patient>/<variant>.png` plus `<dir>/index.json`.
    pub fn save(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let mut patients = Vec::new();
        for (id, e) in &self.entries {
            let pdir = dir.join(id);
            std::fs::create_dir_all(&pdir)?;
            let mut names = Vec::new();
            for v in AugmentVariant::ALL {
                let name = format!("{}.png", v.name());
                let path = pdir.join(&name);
                e.view(v).save_png(&path)?;
                written.push(path);
                names.push(format!("{id}/{name}"));
            }
            patients.push(IndexEntry {
                id: id.clone(),
                height: e.original().height(),
                width: e.original().width(),
                boxes: e.boxes,
                views: names,
            });
        }
        let index = StoreIndex {
            version: 1,
            global_seed: self.global_seed,
            patients,
        };
        let path = dir.join("index.json");
        std::fs::write(&path, serde_json::to_string_pretty(&index)?)?;
        written.push(path);
        Ok(written)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let index: StoreIndex =
            serde_json::from_str(&std::fs::read_to_string(dir.join("index.json"))?)?;
        let mut entries = BTreeMap::new();
        for p in index.patients {
            let mut views = Vec::with_capacity(5);
            for v in AugmentVariant::ALL {
                let img = ImageTensor::load(&dir.join(&p.id).join(format!("{}.png", v.name())))?;
                if img.dims() != (p.height, p.width) {
                    return Err(Error::InvalidInput(format!(
                        "view {} of {} has wrong dimensions",
                        v.name(),
                        p.id
                    )));
                }
                views.push(img);
            }
            entries.insert(
                p.id,
                StoreEntry {
                    boxes: p.boxes,
                    views: views.try_into().expect("five views"),
                },
            );
        }
        Ok(Self {
            global_seed: index.global_seed,
            entries,
        })
    }
}

/// Draw the training view for one epoch: uniform over the five variants
/// when `augment_bbox` is set, otherwise always the original.
pub fn sample_training_view<'a>(
    store: &'a ImageStore,
    patient_id: &str,
    rng: &mut Rng,
    augment_bbox: bool,
) -> Result<&'a ImageTensor> {
    let entry = store.get(patient_id)?;
    if !augment_bbox {
        return Ok(entry.original());
    }
    let k = rng.random_range(0..AugmentVariant::ALL.len());
    Ok(&entry.views[k])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::bbox::BBox;
    use crate::rng::rng_from_seed;

    fn boxes() -> BBoxSet {
        BBoxSet {
            left_lung: BBox::new(1, 2, 7, 14),
            right_lung: BBox::new(9, 2, 15, 14),
            mediastinum: BBox::new(6, 4, 10, 15),
            trachea: BBox::new(7, 0, 9, 5),
        }
    }

    fn inputs(n: usize) -> Vec<ImageInput> {
        (0..n)
            .map(|i| ImageInput {
                patient_id: format!("p{i}"),
                image: ImageTensor::new(
                    16,
                    16,
                    (0..256).map(|k| ((k * 7 + i) % 256) as f64 / 255.0).collect(),
                )
                .unwrap(),
                boxes: Some(boxes()),
            })
            .collect()
    }

    #[test]
    fn five_views_per_image_and_deterministic() {
        let a = precompute_variants(&inputs(3), 2020, Execution::Parallel).unwrap();
        assert_eq!(a.view_count(), 15);
        let b = precompute_variants(&inputs(3), 2020, Execution::Sequential).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_boxes_names_patient() {
        let mut inp = inputs(2);
        inp[1].boxes = None;
        let err = precompute_variants(&inp, 2020, Execution::Sequential).unwrap_err();
        assert!(err.to_string().contains("p1"));
    }

    #[test]
    fn save_load_roundtrip_is_lossless() {
        let store = precompute_variants(&inputs(2), 7, Execution::Sequential).unwrap();
        let dir = tempfile::tempdir().unwrap();
        store.save(dir.path()).unwrap();
        let back = ImageStore::load(dir.path()).unwrap();
        assert_eq!(store, back);
    }

    #[test]
    fn sampling_respects_flag_and_seed() {
        let store = precompute_variants(&inputs(1), 7, Execution::Sequential).unwrap();
        let mut rng = rng_from_seed(1);
        for _ in 0..50 {
            let v = sample_training_view(&store, "p0", &mut rng, false).unwrap();
            assert_eq!(v, store.get("p0").unwrap().original());
        }
        assert!(sample_training_view(&store, "nobody", &mut rng, true).is_err());
    }
}
