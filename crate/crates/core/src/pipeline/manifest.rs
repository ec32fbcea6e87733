use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::{Stage, StageSummary};
use crate::artifact::{sha256_file, sha256_hex, write_atomic};
use crate::dataset::DatasetPaths;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::matrix::FeatureMatrix;

pub const MANIFEST_FILE: &str = "manifest.json";
const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub sha256: String,
    pub stage: Stage,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub seed: u64,
    pub seconds: f64,
    /// Path -> SHA-256 of everything the stage read.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
}

/// Contents of `<out>/manifest.json`. Artifact paths are relative to the
/// output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    /// Configuration of the most recent stage run.
    pub config: PipelineConfig,
    pub versions: BTreeMap<String, String>,
    pub artifacts: BTreeMap<String, ArtifactRecord>,
    pub stages: BTreeMap<Stage, StageRecord>,
    pub warnings: Vec<String>,
}

impl RunManifest {
    fn new(cfg: &PipelineConfig) -> Self {
        Self {
            version: MANIFEST_VERSION,
            config: cfg.clone(),
            versions: BTreeMap::from([
                ("fuseclin-core".to_string(), env!("CARGO_PKG_VERSION").to_string()),
                ("manifest".to_string(), MANIFEST_VERSION.to_string()),
            ]),
            artifacts: BTreeMap::new(),
            stages: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    /// The manifest in `out_dir`, if one exists.
    pub fn load(out_dir: &Path) -> Result<Option<Self>> {
        let path = out_dir.join(MANIFEST_FILE);
        if !path.is_file() {
            return Ok(None);
        }
        let m: Self = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::Stale(format!("manifest version {} is not {MANIFEST_VERSION}", m.version)));
        }
        Ok(Some(m))
    }

    /// Artifact path -> SHA-256.
    pub fn artifact_hashes(&self) -> BTreeMap<String, String> {
        self.artifacts.iter().map(|(k, v)| (k.clone(), v.sha256.clone())).collect()
    }
}

/// Files under `dir`, recursively, in sorted order.
fn list_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            out.extend(list_files(&p)?);
        } else {
            out.push(p);
        }
    }
    Ok(out)
}

fn rel_string(base: &Path, p: &Path) -> String {
    let rel = p.strip_prefix(base).expect("path under base");
    rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

/// Reads and writes of one stage run, committed to the manifest at the end.
pub(crate) struct StageContext<'a> {
    pub cfg: &'a PipelineConfig,
    pub exec: Execution,
    stage: Stage,
    manifest: RunManifest,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    warnings: Vec<String>,
}

impl<'a> StageContext<'a> {
    pub fn open(cfg: &'a PipelineConfig, stage: Stage, exec: Execution) -> Result<Self> {
        std::fs::create_dir_all(&cfg.out_dir)?;
        let manifest = RunManifest::load(&cfg.out_dir)?.unwrap_or_else(|| RunManifest::new(cfg));
        Ok(Self {
            cfg,
            exec,
            stage,
            manifest,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            warnings: Vec::new(),
        })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.cfg.out_dir.join(rel)
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::warn!("{}: {msg}", self.stage);
        self.warnings.push(msg);
    }

    fn missing(rel: &str, producer: Stage) -> Error {
        Error::MissingArtifact { artifact: rel.to_string(), stage: producer.name().to_string() }
    }

    /// Check a recorded artifact against its current content and against
    /// the inputs its producing stage saw.
    fn verify(&self, rel: &str, sha: &str, producer: Stage) -> Result<()> {
        let rec = self.manifest.artifacts.get(rel).ok_or_else(|| Self::missing(rel, producer))?;
        if rec.sha256 != sha {
            return Err(Error::Stale(format!("{rel} changed after stage '{}' wrote it; rerun that stage", rec.stage)));
        }
        if rec.stage != Stage::Synth && rec.seed != self.cfg.seed {
            return Err(Error::Stale(format!(
                "{rel} was produced with seed {}, the config says {}; rerun stage '{}'",
                rec.seed, self.cfg.seed, rec.stage
            )));
        }
        if let Some(st) = self.manifest.stages.get(&rec.stage) {
            for (input, h) in &st.inputs {
                if self.manifest.artifacts.get(input).is_some_and(|cur| &cur.sha256 != h) {
                    return Err(Error::Stale(format!(
                        "{rel} was built from an older {input}; rerun stage '{}'",
                        rec.stage
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn read(&mut self, rel: &str, producer: Stage) -> Result<Vec<u8>> {
        let path = self.path(rel);
        if !path.is_file() || !self.manifest.artifacts.contains_key(rel) {
            return Err(Self::missing(rel, producer));
        }
        let bytes = std::fs::read(&path)?;
        let sha = sha256_hex(&bytes);
        self.verify(rel, &sha, producer)?;
        self.inputs.insert(rel.to_string(), sha);
        Ok(bytes)
    }

    pub fn read_string(&mut self, rel: &str, producer: Stage) -> Result<String> {
        String::from_utf8(self.read(rel, producer)?).map_err(|_| Error::InvalidInput(format!("{rel} is not UTF-8")))
    }

    pub fn read_json<T: DeserializeOwned>(&mut self, rel: &str, producer: Stage) -> Result<T> {
        Ok(serde_json::from_slice(&self.read(rel, producer)?)?)
    }

    pub fn read_matrix(&mut self, rel: &str, producer: Stage) -> Result<FeatureMatrix> {
        FeatureMatrix::read_csv(self.read(rel, producer)?.as_slice())
    }

    /// Verify every recorded file under `rel_dir` and return its path.
    pub fn read_tree(&mut self, rel_dir: &str, producer: Stage) -> Result<PathBuf> {
        let prefix = format!("{rel_dir}/");
        let files: Vec<String> = self.manifest.artifacts.keys().filter(|k| k.starts_with(&prefix)).cloned().collect();
        let dir = self.path(rel_dir);
        if files.is_empty() || !dir.is_dir() {
            return Err(Self::missing(rel_dir, producer));
        }
        for rel in files {
            let path = self.path(&rel);
            if !path.is_file() {
                return Err(Error::Stale(format!("{rel} was deleted; rerun stage '{producer}'")));
            }
            let sha = sha256_file(&path)?;
            self.verify(&rel, &sha, producer)?;
            self.inputs.insert(rel, sha);
        }
        Ok(dir)
    }

    /// Record a dataset as input: the synth output when `synthetic`, else
    /// files outside the output directory, which must exist.
    pub fn dataset_input(&mut self, paths: &DatasetPaths, synthetic: bool, site: &str) -> Result<()> {
        if synthetic {
            self.read_tree(&format!("synth/{site}"), Stage::Synth)?;
            return Ok(());
        }
        for dir in [&paths.images, &paths.bboxes] {
            if !dir.is_dir() {
                return Err(Error::Precondition(format!("{} does not exist", dir.display())));
            }
        }
        for file in [&paths.ehr, &paths.schema] {
            if !file.is_file() {
                return Err(Error::Precondition(format!("{} does not exist", file.display())));
            }
            self.inputs.insert(file.display().to_string(), sha256_file(file)?);
        }
        Ok(())
    }

    /// Record a file outside the output directory as input.
    pub fn external_input(&mut self, path: &Path) -> Result<()> {
        if !path.is_file() {
            return Err(Error::Precondition(format!("{} does not exist", path.display())));
        }
        self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    fn check_owner(&self, rel: &str) -> Result<()> {
        match self.manifest.artifacts.get(rel) {
            Some(rec) if rec.stage != self.stage => Err(Error::InvalidInput(format!(
                "{rel} belongs to stage '{}', not '{}'",
                rec.stage, self.stage
            ))),
            _ => Ok(()),
        }
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        self.check_owner(rel)?;
        write_atomic(&self.path(rel), bytes)?;
        self.outputs.insert(rel.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, rel: &str, value: &T) -> Result<()> {
        self.write(rel, &serde_json::to_vec_pretty(value)?)
    }

    /// Build a directory in a sibling temp location, then swap it in.
    pub fn write_tree(&mut self, rel_dir: &str, build: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
        let dir = self.path(rel_dir);
        let tmp = self.path(&format!("{rel_dir}.partial"));
        if tmp.exists() {
            std::fs::remove_dir_all(&tmp)?;
        }
        std::fs::create_dir_all(&tmp)?;
        build(&tmp)?;
        for f in list_files(&tmp)? {
            self.check_owner(&format!("{rel_dir}/{}", rel_string(&tmp, &f)))?;
        }
        if dir.exists() {
            std::fs::remove_dir_all(&dir)?;
        }
        std::fs::rename(&tmp, &dir)?;
        for f in list_files(&dir)? {
            self.outputs.insert(rel_string(&self.cfg.out_dir, &f), sha256_file(&f)?);
        }
        Ok(())
    }

    /// Replace this stage's records in the manifest and write it.
    pub fn commit(mut self, seconds: f64) -> Result<StageSummary> {
        let stage = self.stage;
        let seed = self.cfg.seed;
        self.manifest.artifacts.retain(|_, r| r.stage != stage);
        for (rel, sha) in &self.outputs {
            self.manifest.artifacts.insert(rel.clone(), ArtifactRecord { sha256: sha.clone(), stage, seed });
        }
        let outputs: Vec<String> = self.outputs.keys().cloned().collect();
        self.manifest.stages.insert(
            stage,
            StageRecord {
                seed,
                seconds,
                inputs: self.inputs,
                outputs: outputs.clone(),
                warnings: self.warnings.clone(),
            },
        );
        self.manifest.config = self.cfg.clone();
        self.manifest.warnings = self
            .manifest
            .stages
            .iter()
            .flat_map(|(s, r)| r.warnings.iter().map(move |w| format!("{s}: {w}")))
            .collect();
        write_atomic(&self.cfg.out_dir.join(MANIFEST_FILE), &serde_json::to_vec_pretty(&self.manifest)?)?;
        Ok(StageSummary { stage, outputs, warnings: self.warnings, seconds })
    }
}
