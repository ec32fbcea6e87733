use std::io::Write;

use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::extractor::{CxrExtractor, FeatureExtractor};
use super::head::{forward_bce, init_head, Head, HeadConfig};
use super::teacher::{TeacherCache, TeacherExtractor};
use crate::error::{Error, Result};
use crate::evaluation::{auroc, compute_metrics};
use crate::exec::{map_indexed, Execution};
use crate::imaging::{resize, sample_training_view, ImageStore, ImageTensor, OnlineAugment};
use crate::rng::{child_rng, derive_seed, DEFAULT_SEED};

const STREAM_VIEW: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_DROPOUT: u64 = 3;
const STREAM_INIT: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub initial_lr: f64,
    pub lr_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Draw one of the five stored views per image per epoch.
    pub augment_bbox: bool,
    /// Random mirror and brightness shift per image per epoch.
    pub augment_online: bool,
    #[serde(default)]
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            initial_lr: 2e-3,
            lr_decay: 0.96,
            max_epochs: 30,
            patience: 2,
            seed: DEFAULT_SEED,
            augment_bbox: true,
            augment_online: true,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(Error::InvalidInput("initial_lr must be > 0".into()));
        }
        if self.patience < 1 || self.batch_size < 1 || self.max_epochs < 1 {
            return Err(Error::InvalidInput("patience, batch_size and max_epochs must be >= 1".into()));
        }
        Ok(())
    }

    /// Learning rate for a zero-based epoch.
    pub fn lr(&self, epoch: usize) -> f64 {
        self.initial_lr * self.lr_decay.powi(epoch as i32)
    }
}

/// Thresholded (0.5) metrics plus AUROC for one partition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct EpochMetrics {
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub accuracy: Option<f64>,
    pub auroc: Option<f64>,
    pub f1: Option<f64>,
}

impl EpochMetrics {
    fn compute(labels: &[u8], probs: &[f64]) -> Result<Self> {
        let m = compute_metrics(labels, probs, 0.5)?;
        Ok(Self {
            recall: m.sensitivity,
            precision: m.ppv,
            accuracy: m.accuracy,
            auroc: auroc(labels, probs).ok(),
            f1: m.f1,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    /// Absent when training without a validation partition.
    pub valid_loss: Option<f64>,
    pub train: EpochMetrics,
    pub valid: Option<EpochMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedCxrModel {
    pub extractor: CxrExtractor,
    pub head: Head,
    pub head_config: HeadConfig,
    pub train_config: TrainConfig,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Patient ids with labels for the training and validation partitions.
#[derive(Debug, Clone, PartialEq)]
pub struct CxrSplit {
    pub train: Vec<(String, u8)>,
    pub valid: Vec<(String, u8)>,
}

fn check_partition(name: &str, part: &[(String, u8)]) -> Result<()> {
    let pos = part.iter().filter(|p| p.1 == 1).count();
    if pos == 0 || pos == part.len() {
        return Err(Error::Precondition(format!("{name} partition has a single class")));
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x}"))
}

impl TrainedCxrModel {
    pub fn predict(&self, img: &ImageTensor) -> Result<f64> {
        predict_cxr(self, img)
    }

    /// Learning-curve CSV, one row per epoch.
    pub fn write_history_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "epoch,lr,train_loss,valid_loss,train_recall,train_precision,train_accuracy,train_auroc,train_f1,valid_recall,valid_precision,valid_accuracy,valid_auroc,valid_f1"
        )?;
        for r in &self.history {
            let m = |e: &EpochMetrics| {
                [e.recall, e.precision, e.accuracy, e.auroc, e.f1].map(fmt_opt).join(",")
            };
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.epoch,
                r.lr,
                r.train_loss,
                fmt_opt(r.valid_loss),
                m(&r.train),
                m(&r.valid.unwrap_or_default())
            )?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Evaluation-mode probability; no augmentation is applied.
pub fn predict_cxr(model: &TrainedCxrModel, img: &ImageTensor) -> Result<f64> {
    let f = model.extractor.extract_resized(img)?;
    if f.len() != model.head.feature_dim {
        return Err(Error::InvalidInput(format!(
            "extractor produced {} features, head expects {}",
            f.len(),
            model.head.feature_dim
        )));
    }
    Ok(model.head.predict(&f))
}

pub fn predict_many(model: &TrainedCxrModel, imgs: &[&ImageTensor], exec: Execution) -> Result<Vec<f64>> {
    map_indexed(exec, imgs.len(), |i| predict_cxr(model, imgs[i])).into_iter().collect()
}

fn training_image(
    store: &ImageStore,
    id: &str,
    cfg: &TrainConfig,
    epoch: usize,
    idx: usize,
) -> Result<ImageTensor> {
    let mut rng = child_rng(cfg.seed, &[STREAM_VIEW, epoch as u64, idx as u64]);
    let view = sample_training_view(store, id, &mut rng, cfg.augment_bbox)?;
    Ok(if cfg.augment_online {
        OnlineAugment::sample(&mut rng).apply(view)
    } else {
        view.clone()
    })
}

fn originals(store: &ImageStore, part: &[(String, u8)]) -> Result<Vec<ImageTensor>> {
    part.iter().map(|(id, _)| Ok(store.get(id)?.original().clone())).collect()
}

fn extract_all(ex: &CxrExtractor, imgs: &[ImageTensor], exec: Execution) -> Result<Vec<Vec<f64>>> {
    map_indexed(exec, imgs.len(), |i| ex.extract_resized(&imgs[i])).into_iter().collect()
}

/// Train the head (and the extractor's trainable tail, when present) with
/// weighted BCE and Adam. The learning rate decays by `lr_decay` per epoch;
/// training stops after `patience` epochs without a strict improvement of
/// the validation loss, and the best epoch's weights are restored.
pub fn train_cxr(
    store: &ImageStore,
    split: &CxrSplit,
    extractor: CxrExtractor,
    head_cfg: &HeadConfig,
    cfg: &TrainConfig,
    exec: Execution,
) -> Result<TrainedCxrModel> {
    check_partition("validation", &split.valid)?;
    train_inner(store, &split.train, Some(&split.valid), extractor, head_cfg, cfg, exec)
}

/// Train on every listed patient for exactly `cfg.max_epochs` epochs with no
/// validation partition and no early stopping; the last epoch's weights are
/// kept.
pub fn train_cxr_fixed(
    store: &ImageStore,
    train: &[(String, u8)],
    extractor: CxrExtractor,
    head_cfg: &HeadConfig,
    cfg: &TrainConfig,
    exec: Execution,
) -> Result<TrainedCxrModel> {
    train_inner(store, train, None, extractor, head_cfg, cfg, exec)
}

fn train_inner(
    store: &ImageStore,
    train: &[(String, u8)],
    valid: Option<&[(String, u8)]>,
    extractor: CxrExtractor,
    head_cfg: &HeadConfig,
    cfg: &TrainConfig,
    exec: Execution,
) -> Result<TrainedCxrModel> {
    cfg.validate()?;
    check_partition("training", train)?;
    let valid = valid.unwrap_or(&[]);
    let pos = train.iter().filter(|p| p.1 == 1).count();
    let mut head = init_head(
        head_cfg,
        extractor.feature_dim(),
        pos,
        train.len() - pos,
        derive_seed(cfg.seed, &[STREAM_INIT]),
    )?;
    let mut extractor = extractor;
    let tail = matches!(&extractor, CxrExtractor::Teacher(t) if t.has_trainable_tail());
    let weights = head_cfg.class_weights;
    let train_labels: Vec<u8> = train.iter().map(|p| p.1).collect();
    let valid_labels: Vec<u8> = valid.iter().map(|p| p.1).collect();
    let train_orig = originals(store, &train)?;
    let valid_orig = originals(store, &valid)?;
    let static_views = !cfg.augment_bbox && !cfg.augment_online;
    let mut frozen_train = None;
    let mut frozen_valid = None;
    if !tail {
        frozen_train = Some(extract_all(&extractor, &train_orig, exec)?);
        frozen_valid = Some(extract_all(&extractor, &valid_orig, exec)?);
    }

    if head_cfg.standardize_inputs {
        match &frozen_train {
            Some(f) => head.fit_standardization(f)?,
            None => head.fit_standardization(&extract_all(&extractor, &train_orig, exec)?)?,
        }
    }

    let mut head_opt = Adam::new(cfg.adam, &head.params_mut().iter().map(|p| p.len()).collect::<Vec<_>>());
    let mut tail_opt = match &mut extractor {
        CxrExtractor::Teacher(t) if tail => Some(Adam::new(
            cfg.adam,
            &t.tail_params_mut().iter().map(|p| p.len()).collect::<Vec<_>>(),
        )),
        _ => None,
    };

    let n = train.len();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, Head, CxrExtractor)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;
    for epoch in 0..cfg.max_epochs {
        let lr = cfg.lr(epoch);
        let epoch_feats = match (&frozen_train, static_views) {
            (Some(f), true) => Some(f.clone()),
            (Some(_), false) => Some(
                map_indexed(exec, n, |i| {
                    let img = training_image(store, &train[i].0, cfg, epoch, i)?;
                    extractor.extract_resized(&img)
                })
                .into_iter()
                .collect::<Result<Vec<_>>>()?,
            ),
            (None, _) => None,
        };
        let mut order: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(&mut order[..], &mut child_rng(cfg.seed, &[STREAM_SHUFFLE, epoch as u64]));
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut drng = child_rng(cfg.seed, &[STREAM_DROPOUT, epoch as u64, b as u64]);
            let masks: Vec<Option<Vec<f64>>> = chunk.iter().map(|_| head.sample_mask(&mut drng)).collect();
            let labels: Vec<u8> = chunk.iter().map(|&i| train_labels[i]).collect();
            let (feats, caches): (Vec<Vec<f64>>, Vec<TeacherCache>) = match &epoch_feats {
                Some(f) => (chunk.iter().map(|&i| f[i].clone()).collect(), Vec::new()),
                None => {
                    let CxrExtractor::Teacher(t) = &extractor else { unreachable!() };
                    let out: Vec<Result<(Vec<f64>, TeacherCache)>> = map_indexed(exec, chunk.len(), |k| {
                        let i = chunk[k];
                        let img = training_image(store, &train[i].0, cfg, epoch, i)?;
                        let img = if img.dims() == t.input_size() { img } else { resize(&img, t.input_size())? };
                        let cache = t.forward(&img);
                        Ok((TeacherExtractor::pool_features(&cache.maps), cache))
                    });
                    out.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip()
                }
            };
            let refs: Vec<&[f64]> = feats.iter().map(Vec::as_slice).collect();
            let (loss, grads, dfeat) = head.loss_and_grad(&refs, &labels, weights, Some(&masks));
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss {loss} at epoch {epoch}, batch {b} (lr {lr})"
                )));
            }
            if let (CxrExtractor::Teacher(t), Some(opt)) = (&mut extractor, tail_opt.as_mut()) {
                let per: Vec<Vec<(Vec<f64>, Vec<f64>)>> = map_indexed(exec, caches.len(), |k| {
                    t.tail_gradients(&caches[k], &dfeat[k])
                });
                let mut total = per[0].clone();
                for g in &per[1..] {
                    for (acc, add) in total.iter_mut().zip(g) {
                        acc.0.iter_mut().zip(&add.0).for_each(|(a, b)| *a += b);
                        acc.1.iter_mut().zip(&add.1).for_each(|(a, b)| *a += b);
                    }
                }
                let flat: Vec<&Vec<f64>> = total.iter().flat_map(|(w, b)| [w, b]).collect();
                opt.step(t.tail_params_mut(), &flat, lr);
            }
            head_opt.step(head.params_mut(), &grads.flat(), lr);
        }

        let (tf, vf) = match (&frozen_train, &frozen_valid) {
            (Some(t), Some(v)) => (t.clone(), v.clone()),
            _ => (extract_all(&extractor, &train_orig, exec)?, extract_all(&extractor, &valid_orig, exec)?),
        };
        let (tp, train_loss) = forward_bce(&head, &tf, &train_labels, weights)?;
        let mut record = EpochRecord {
            epoch,
            lr,
            train_loss,
            valid_loss: None,
            train: EpochMetrics::compute(&train_labels, &tp)?,
            valid: None,
        };
        if valid.is_empty() {
            history.push(record);
            best = Some((train_loss, epoch, head.clone(), extractor.clone()));
            continue;
        }
        let (vp, valid_loss) = forward_bce(&head, &vf, &valid_labels, weights)?;
        if !valid_loss.is_finite() {
            return Err(Error::NonFinite(format!("validation loss {valid_loss} at epoch {epoch}")));
        }
        record.valid_loss = Some(valid_loss);
        record.valid = Some(EpochMetrics::compute(&valid_labels, &vp)?);
        history.push(record);
        if best.as_ref().is_none_or(|b| valid_loss < b.0) {
            best = Some((valid_loss, epoch, head.clone(), extractor.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }
    let (_, best_epoch, head, extractor) = best.expect("at least one epoch");
    Ok(TrainedCxrModel {
        extractor,
        head,
        head_config: head_cfg.clone(),
        train_config: cfg.clone(),
        history,
        best_epoch,
        stopped_early,
    })
}
