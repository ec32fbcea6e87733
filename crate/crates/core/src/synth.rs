//! Seeded synthetic cohorts (EHR table, radiographs, boxes) with plantable
//! signal in either modality.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::artifact::{sha256_hex, write_atomic};
use crate::cohort::{Cell, CohortTable, ColumnKind, ColumnSpec, FeatureSchema};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::imaging::{bilinear_resize_raw, BBox, BBoxSet, ImageInput, ImageTensor};
use crate::rng::{child_rng, patient_seed, Rng, DEFAULT_SEED};

pub const MIN_IMAGE_SIZE: usize = 64;
pub const MIN_POSITIVES: f64 = 8.0;

struct NumDef {
    name: &'static str,
    kind: ColumnKind,
    unit: &'static str,
    mean: f64,
    sd: f64,
    lo: f64,
    hi: f64,
    /// Value written when an invalid reading is injected (vitals only).
    invalid: f64,
}

const fn num(name: &'static str, unit: &'static str, mean: f64, sd: f64, lo: f64, hi: f64) -> NumDef {
    NumDef { name, kind: ColumnKind::Numeric, unit, mean, sd, lo, hi, invalid: f64::NAN }
}

const fn vital(name: &'static str, unit: &'static str, mean: f64, sd: f64, lo: f64, hi: f64, invalid: f64) -> NumDef {
    NumDef { name, kind: ColumnKind::Vital, unit, mean, sd, lo, hi, invalid }
}

const NUMERIC: [NumDef; 15] = [
    num("age", "years", 62.0, 15.0, 18.0, 100.0),
    vital("temperature", "C", 37.1, 0.7, 34.0, 42.0, 51.0),
    vital("spo2", "%", 94.0, 3.5, 60.0, 100.0, 101.0),
    vital("heart_rate", "bpm", 88.0, 15.0, 40.0, 180.0, 350.0),
    vital("systolic_bp", "mmHg", 128.0, 18.0, 70.0, 220.0, 250.0),
    num("creatinine", "mg/dL", 1.0, 0.35, 0.2, 8.0),
    num("d_dimer", "ng/mL", 900.0, 500.0, 50.0, 10000.0),
    num("crp", "mg/L", 60.0, 40.0, 0.5, 400.0),
    num("ldh", "U/L", 300.0, 90.0, 80.0, 1500.0),
    num("lymphocytes", "10^3/uL", 1.1, 0.45, 0.1, 5.0),
    num("platelets", "10^3/uL", 220.0, 70.0, 20.0, 700.0),
    num("wbc", "10^3/uL", 7.5, 2.8, 1.0, 30.0),
    num("glucose", "mg/dL", 120.0, 35.0, 50.0, 500.0),
    num("sodium", "mmol/L", 138.0, 4.0, 120.0, 160.0),
    num("troponin", "ng/L", 12.0, 8.0, 0.0, 200.0),
];

/// Binary comorbidities with their base prevalence.
const BINARY: [(&str, f64); 8] = [
    ("hypertension", 0.45),
    ("diabetes", 0.22),
    ("hyperlipidemia", 0.30),
    ("copd", 0.08),
    ("heart_failure", 0.07),
    ("ckd", 0.08),
    ("stroke", 0.05),
    ("cancer", 0.09),
];

pub const OUTCOME_COLUMN: &str = "expired";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub pos_rate: f64,
    pub seed: u64,
    /// Per-feature shift for positives: standard deviations for numeric
    /// columns, log-odds for binary columns.
    pub ehr_effect: BTreeMap<String, f64>,
    /// Added to the opacity amplitude in the lungs of positives.
    pub img_effect: f64,
    pub image_size: usize,
    pub missing_rate: BTreeMap<String, f64>,
    /// Fraction of vital readings replaced by an out-of-range value.
    pub invalid_vital_rate: f64,
    /// Extra rows that violate the load-time exclusion rules.
    pub excluded_rows: usize,
    pub site: String,
}

impl Default for SynthSpec {
    fn default() -> Self {
        let effects = [
            ("age", 0.9),
            ("spo2", -0.5),
            ("crp", 0.4),
            ("ldh", 0.3),
            ("ckd", 0.6),
            ("hypertension", 0.4),
        ];
        let missing = [
            ("d_dimer", 0.6),
            ("troponin", 0.3),
            ("ldh", 0.15),
            ("crp", 0.1),
            ("lymphocytes", 0.1),
            ("temperature", 0.02),
            ("spo2", 0.02),
            ("heart_rate", 0.02),
            ("systolic_bp", 0.02),
        ];
        Self {
            n: 400,
            pos_rate: 0.2,
            seed: DEFAULT_SEED,
            ehr_effect: effects.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            img_effect: 0.08,
            image_size: MIN_IMAGE_SIZE,
            missing_rate: missing.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            invalid_vital_rate: 0.01,
            excluded_rows: 0,
            site: "synth".into(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.pos_rate > 0.0 && self.pos_rate < 1.0) {
            return Err(Error::InvalidInput(format!("pos_rate must be in (0,1), got {}", self.pos_rate)));
        }
        if self.pos_rate * (self.n as f64) < MIN_POSITIVES || (1.0 - self.pos_rate) * (self.n as f64) < MIN_POSITIVES {
            return Err(Error::InvalidInput(format!(
                "infeasible spec: n = {} with pos_rate {} gives fewer than {MIN_POSITIVES} expected cases per class",
                self.n, self.pos_rate
            )));
        }
        if self.image_size < MIN_IMAGE_SIZE {
            return Err(Error::InvalidInput(format!("image_size must be >= {MIN_IMAGE_SIZE}")));
        }
        let known = |k: &str| k == "sex" || NUMERIC.iter().any(|d| d.name == k) || BINARY.iter().any(|b| b.0 == k);
        for k in self.ehr_effect.keys().chain(self.missing_rate.keys()) {
            if !known(k) {
                return Err(Error::InvalidInput(format!("unknown synthetic column '{k}'")));
            }
        }
        if self.missing_rate.values().any(|r| !(0.0..1.0).contains(r))
            || !(0.0..1.0).contains(&self.invalid_vital_rate)
        {
            return Err(Error::InvalidInput("rates must be in [0,1)".into()));
        }
        Ok(())
    }

    pub fn effect(&self, name: &str) -> f64 {
        self.ehr_effect.get(name).copied().unwrap_or(0.0)
    }
}

/// Elliptical opacity drawn inside a lung box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub cx: f64,
    pub cy: f64,
    pub rx: f64,
    pub ry: f64,
    pub amplitude: f64,
}

impl Blob {
    /// Bounding pixel rectangle of the ellipse support, half-open.
    pub fn support(&self) -> BBox {
        BBox::new(
            (self.cx - self.rx).floor().max(0.0) as usize,
            (self.cy - self.ry).floor().max(0.0) as usize,
            (self.cx + self.rx).ceil() as usize,
            (self.cy + self.ry).ceil() as usize,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthPatient {
    pub id: String,
    pub label: u8,
    pub image: ImageTensor,
    pub boxes: BBoxSet,
    pub blobs: Vec<Blob>,
    pub row: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCohort {
    pub spec: SynthSpec,
    pub schema: FeatureSchema,
    pub patients: Vec<SynthPatient>,
}

pub fn synth_schema() -> FeatureSchema {
    let mut cols = vec![
        ColumnSpec::new("id", ColumnKind::Id, ""),
        ColumnSpec::new("admission_time", ColumnKind::AdmissionTime, ""),
        ColumnSpec::new("sex", ColumnKind::Categorical, ""),
    ];
    cols.extend(NUMERIC.iter().map(|d| ColumnSpec::new(d.name, d.kind, d.unit)));
    cols.extend(BINARY.iter().map(|(n, _)| ColumnSpec::new(*n, ColumnKind::Categorical, "")));
    cols.push(ColumnSpec::new(OUTCOME_COLUMN, ColumnKind::Outcome, ""));
    FeatureSchema::new(cols).expect("static schema is valid")
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn bernoulli_logit(rng: &mut Rng, p: f64, shift: f64) -> bool {
    let z = (p / (1.0 - p)).ln() + shift;
    rng.random::<f64>() < 1.0 / (1.0 + (-z).exp())
}

/// Kind of exclusion planted in an extra row.
#[derive(Clone, Copy)]
enum Planted {
    None,
    UnderAge,
    NoAdmission,
}

fn ehr_row(spec: &SynthSpec, id: &str, y: u8, rng: &mut Rng, planted: Planted) -> Vec<Cell> {
    let schema_len = 3 + NUMERIC.len() + BINARY.len() + 1;
    let mut row = Vec::with_capacity(schema_len);
    row.push(Cell::Text(id.to_string()));
    let day = rng.random_range(1..=28);
    row.push(match planted {
        Planted::NoAdmission => Cell::Missing,
        _ => Cell::Text(format!("2020-03-{day:02}")),
    });
    let male = bernoulli_logit(rng, 0.55, spec.effect("sex") * f64::from(y));
    row.push(Cell::Text(if male { "M" } else { "F" }.into()));
    let yf = f64::from(y);
    for d in &NUMERIC {
        let z: f64 = StandardNormal.sample(rng);
        let mut v = round2((d.mean + d.sd * (z + spec.effect(d.name) * yf)).clamp(d.lo, d.hi));
        if d.name == "age" {
            v = v.round();
            if let Planted::UnderAge = planted {
                v = f64::from(rng.random_range(5..=16));
            }
        }
        let missing = rng.random::<f64>() < spec.missing_rate.get(d.name).copied().unwrap_or(0.0);
        let invalid = d.kind == ColumnKind::Vital && rng.random::<f64>() < spec.invalid_vital_rate;
        row.push(if missing {
            Cell::Missing
        } else if invalid {
            Cell::Num(d.invalid)
        } else {
            Cell::Num(v)
        });
    }
    for (name, p) in BINARY {
        let v = bernoulli_logit(rng, p, spec.effect(name) * yf);
        let missing = rng.random::<f64>() < spec.missing_rate.get(name).copied().unwrap_or(0.0);
        row.push(if missing { Cell::Missing } else { Cell::Text(if v { "1" } else { "0" }.into()) });
    }
    row.push(Cell::Num(yf));
    row
}

fn fill_box(data: &mut [f64], w: usize, b: &BBox, v: f64) {
    for y in b.y0..b.y1 {
        data[y * w + b.x0..y * w + b.x1].iter_mut().for_each(|p| *p = v);
    }
}

fn radiograph(spec: &SynthSpec, boxes: &BBoxSet, y: u8, rng: &mut Rng) -> Result<(ImageTensor, Vec<Blob>)> {
    let s = spec.image_size;
    let mut data = vec![0.10; s * s];
    let body = BBox::new(s / 20, s / 10, s - s / 20, s);
    fill_box(&mut data, s, &body, 0.45);
    fill_box(&mut data, s, &boxes.right_lung, 0.22);
    fill_box(&mut data, s, &boxes.left_lung, 0.22);
    fill_box(&mut data, s, &boxes.mediastinum, 0.62);
    fill_box(&mut data, s, &boxes.trachea, 0.15);
    let g = 9;
    let coarse: Vec<f64> = (0..g * g).map(|_| (rng.random::<f64>() * 2.0 - 1.0) * 0.06).collect();
    let smooth = bilinear_resize_raw(&coarse, g, g, s, s);
    data.iter_mut().zip(&smooth).for_each(|(p, n)| *p += n);

    let mut blobs = Vec::new();
    for lung in [boxes.right_lung, boxes.left_lung] {
        let (bw, bh) = ((lung.x1 - lung.x0) as f64, (lung.y1 - lung.y0) as f64);
        for _ in 0..rng.random_range(1..=3) {
            let rx = bw * rng.random_range(0.15..0.35);
            let ry = bh * rng.random_range(0.10..0.25);
            let cx = lung.x0 as f64 + rx + rng.random::<f64>() * (bw - 2.0 * rx);
            let cy = lung.y0 as f64 + ry + rng.random::<f64>() * (bh - 2.0 * ry);
            let amplitude = rng.random_range(0.05..0.20) + spec.img_effect * f64::from(y);
            let blob = Blob { cx, cy, rx, ry, amplitude };
            let sup = blob.support();
            for py in sup.y0..sup.y1.min(s) {
                for px in sup.x0..sup.x1.min(s) {
                    let dx = (px as f64 + 0.5 - cx) / rx;
                    let dy = (py as f64 + 0.5 - cy) / ry;
                    let d2 = dx * dx + dy * dy;
                    if d2 < 1.0 {
                        data[py * s + px] += amplitude * (1.0 - d2);
                    }
                }
            }
            blobs.push(blob);
        }
    }
    for p in &mut data {
        *p = (p.clamp(0.0, 1.0) * 255.0).round() / 255.0;
    }
    Ok((ImageTensor::new(s, s, data)?, blobs))
}

/// Generate a cohort. Every patient draws from streams derived from
/// `(seed, id)`, so output is independent of execution mode.
pub fn generate_cohort(spec: &SynthSpec, exec: Execution) -> Result<SynthCohort> {
    spec.validate()?;
    let schema = synth_schema();
    let boxes = BBoxSet::canonical(spec.image_size, spec.image_size);
    let total = spec.n + spec.excluded_rows;
    let patients = map_indexed(exec, total, |i| -> Result<SynthPatient> {
        let id = format!("{}-{:05}", spec.site, i);
        let seed = patient_seed(spec.seed, &id);
        let y = u8::from(child_rng(seed, &[0]).random::<f64>() < spec.pos_rate);
        let planted = if i < spec.n {
            Planted::None
        } else if (i - spec.n) % 2 == 0 {
            Planted::UnderAge
        } else {
            Planted::NoAdmission
        };
        let row = ehr_row(spec, &id, y, &mut child_rng(seed, &[1]), planted);
        let (image, blobs) = radiograph(spec, &boxes, y, &mut child_rng(seed, &[2]))?;
        Ok(SynthPatient { id, label: y, image, boxes, blobs, row })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(SynthCohort { spec: spec.clone(), schema, patients })
}

#[derive(Serialize)]
struct SynthManifest<'a> {
    spec: &'a SynthSpec,
    rows: usize,
    positives: usize,
    files: BTreeMap<String, String>,
}

fn cell_text(c: &Cell) -> String {
    match c {
        Cell::Missing => String::new(),
        Cell::Num(v) => format!("{v}"),
        Cell::Text(s) => s.clone(),
    }
}

impl SynthCohort {
    pub fn labels(&self) -> Vec<u8> {
        self.patients.iter().map(|p| p.label).collect()
    }

    pub fn image_inputs(&self) -> Vec<ImageInput> {
        self.patients
            .iter()
            .map(|p| ImageInput { patient_id: p.id.clone(), image: p.image.clone(), boxes: Some(p.boxes) })
            .collect()
    }

    /// In-memory table, before any exclusion rule is applied.
    pub fn table(&self) -> Result<CohortTable> {
        CohortTable::new(
            self.schema.clone(),
            self.patients.iter().map(|p| p.row.clone()).collect(),
            self.spec.site.clone(),
        )
    }

    pub fn ehr_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.schema.columns().iter().map(|c| c.name.as_str()))?;
        for p in &self.patients {
            w.write_record(p.row.iter().map(cell_text))?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    /// Write `ehr.csv`, `schema.json`, `images/<id>.png`, `bboxes/<id>.json`
    /// and `manifest.json` (with SHA-256 of every other file).
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut files = BTreeMap::new();
        let mut put = |rel: String, bytes: Vec<u8>| -> Result<()> {
            write_atomic(&dir.join(&rel), &bytes)?;
            files.insert(rel, sha256_hex(&bytes));
            Ok(())
        };
        put("ehr.csv".into(), self.ehr_csv()?)?;
        put("schema.json".into(), serde_json::to_vec_pretty(&self.schema)?)?;
        for p in &self.patients {
            put(format!("images/{}.png", p.id), p.image.png_bytes()?)?;
            put(format!("bboxes/{}.json", p.id), serde_json::to_vec(&p.boxes)?)?;
        }
        let manifest = SynthManifest {
            spec: &self.spec,
            rows: self.patients.len(),
            positives: self.patients.iter().filter(|p| p.label == 1).count(),
            files,
        };
        let mut written: Vec<PathBuf> = manifest.files.keys().map(|k| dir.join(k)).collect();
        write_atomic(&dir.join("manifest.json"), &serde_json::to_vec_pretty(&manifest)?)?;
        written.push(dir.join("manifest.json"));
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{load_cohort_from_reader, LoadOptions};

    fn small() -> SynthSpec {
        SynthSpec { n: 120, pos_rate: 0.25, seed: 7, ..SynthSpec::default() }
    }

    #[test]
    fn reproducible_and_mode_independent() {
        let a = generate_cohort(&small(), Execution::Sequential).unwrap();
        let b = generate_cohort(&small(), Execution::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.ehr_csv().unwrap(), b.ehr_csv().unwrap());
        let mut other = small();
        other.seed = 8;
        assert_ne!(a.labels(), generate_cohort(&other, Execution::Sequential).unwrap().labels());
    }

    #[test]
    fn blobs_stay_inside_lungs() {
        let c = generate_cohort(&small(), Execution::Sequential).unwrap();
        for p in &c.patients {
            for b in &p.blobs {
                let sup = b.support();
                let inside = |l: &BBox| sup.x0 >= l.x0 && sup.x1 <= l.x1 && sup.y0 >= l.y0 && sup.y1 <= l.y1;
                assert!(inside(&p.boxes.left_lung) || inside(&p.boxes.right_lung));
            }
            assert!(p.image.is_8bit_exact());
        }
    }

    #[test]
    fn csv_loads_back_with_exclusions() {
        let spec = SynthSpec { excluded_rows: 4, ..small() };
        let c = generate_cohort(&spec, Execution::Sequential).unwrap();
        let csv = c.ehr_csv().unwrap();
        let t = load_cohort_from_reader(&csv[..], Path::new("ehr.csv"), &c.schema, &LoadOptions::default()).unwrap();
        assert_eq!(t.len(), 120);
        assert_eq!(t.exclusions.under_age, 2);
        assert_eq!(t.exclusions.missing_admission, 2);
        let mem = c.table().unwrap();
        assert_eq!(&mem.rows[..120], &t.rows[..]);
    }

    #[test]
    fn infeasible_specs_rejected() {
        assert!(SynthSpec { n: 20, pos_rate: 0.2, ..small() }.validate().is_err());
        assert!(SynthSpec { image_size: 32, ..small() }.validate().is_err());
        assert!(SynthSpec { pos_rate: 1.0, ..small() }.validate().is_err());
    }

    #[test]
    fn positive_count_within_binomial_bounds() {
        for seed in 0..10 {
            let spec = SynthSpec { n: 400, pos_rate: 0.25, seed, ..small() };
            let c = generate_cohort(&spec, Execution::Sequential).unwrap();
            let k = c.labels().iter().filter(|&&y| y == 1).count() as f64;
            let sd = (400.0f64 * 0.25 * 0.75).sqrt();
            assert!((k - 100.0).abs() <= 3.0 * sd, "seed {seed}: {k}");
        }
    }
}
