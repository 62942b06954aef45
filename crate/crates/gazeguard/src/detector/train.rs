//! The abnormal-state MLP: standardized 7-value features in, two logits out.
//! Adam training with best-validation checkpointing.

use std::path::Path;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::eval::{evaluate_logits, DetectorMetrics};
use super::loss::cross_entropy_loss;
use super::split::SplitSpec;
use crate::error::{Error, Result};
use crate::gradcore::{checkpoint, Dense, Layer, LayerGraph, Optimizer, Relu, Schedule, Tensor};
use crate::synthcam::FeatureRecord;
use crate::trace::LossTrace;
use crate::util::{atomic_write, derive_seed3};

pub const FEATURE_COUNT: usize = 7;

fn default_depth() -> u8 {
    3
}
fn default_epochs() -> u32 {
    30
}
fn default_batch() -> usize {
    128
}
fn default_lr() -> f64 {
    1e-2
}
fn default_schedule() -> Option<Schedule> {
    Some(Schedule {
        factor: 0.1,
        period_epochs: 400,
    })
}
fn default_debounce() -> u32 {
    5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    /// 3 or 4 dense layers.
    #[serde(default = "default_depth")]
    pub depth: u8,
    #[serde(default = "default_epochs")]
    pub epochs: u32,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_schedule")]
    pub schedule: Option<Schedule>,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default = "default_debounce")]
    pub debounce_k: u32,
    #[serde(default)]
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            depth: default_depth(),
            epochs: default_epochs(),
            batch_size: default_batch(),
            lr: default_lr(),
            weight_decay: 0.0,
            schedule: default_schedule(),
            split: SplitSpec::default(),
            debounce_k: default_debounce(),
            seed: 0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !matches!(self.depth, 3 | 4) {
            return Err(Error::Config(format!(
                "detector depth must be 3 or 4, got {}",
                self.depth
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "epochs and batch_size must be positive".into(),
            ));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.debounce_k == 0 {
            return Err(Error::Config("debounce_k must be >= 1".into()));
        }
        self.split.validate()
    }
}

/// 3-layer: 7 -> 32 -> 32 -> 2; 4-layer: 7 -> 64 -> 32 -> 16 -> 2.
pub fn build_mlp(depth: u8, seed: u64) -> Result<LayerGraph> {
    let widths: Vec<usize> = match depth {
        3 => vec![FEATURE_COUNT, 32, 32, 2],
        4 => vec![FEATURE_COUNT, 64, 32, 16, 2],
        other => {
            return Err(Error::Argument(format!(
                "depth must be 3 or 4, got {other}"
            )))
        }
    };
    let mut layers = Vec::new();
    for (i, pair) in widths.windows(2).enumerate() {
        layers.push(Layer::Dense(Dense::new(
            pair[0],
            pair[1],
            derive_seed3(seed, 0x61, i as u64, 0),
        )));
        if i + 2 < widths.len() {
            layers.push(Layer::Relu(Relu::new()));
        }
    }
    LayerGraph::new(layers)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorModelMeta {
    pub depth: u8,
    pub mean: [f64; FEATURE_COUNT],
    pub std: [f64; FEATURE_COUNT],
    pub debounce_k: u32,
}

#[derive(Debug, Clone)]
pub struct DetectorModel {
    pub graph: LayerGraph,
    pub depth: u8,
    pub mean: [f64; FEATURE_COUNT],
    pub std: [f64; FEATURE_COUNT],
    pub debounce_k: u32,
}

impl DetectorModel {
    /// Feature matrix standardized with the model's stored constants.
    pub fn standardize(&self, records: &[FeatureRecord]) -> Result<Tensor> {
        if records.is_empty() {
            return Err(Error::Argument("no records to standardize".into()));
        }
        let mut t = Tensor::zeros(&[records.len(), FEATURE_COUNT]);
        {
            let data = t.data_mut();
            for (i, r) in records.iter().enumerate() {
                for (j, v) in r.features().iter().enumerate() {
                    data[i * FEATURE_COUNT + j] = (v - self.mean[j]) / self.std[j];
                }
            }
        }
        Ok(t)
    }

    pub fn logits(&mut self, records: &[FeatureRecord]) -> Result<Tensor> {
        let x = self.standardize(records)?;
        self.graph.forward(&x, None)
    }

    fn meta_path(path: &Path) -> std::path::PathBuf {
        let mut p = path.as_os_str().to_owned();
        p.push(".meta.json");
        std::path::PathBuf::from(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut graph = self.graph.clone();
        graph.clear_caches();
        checkpoint::save(&graph, path)?;
        let meta = DetectorModelMeta {
            depth: self.depth,
            mean: self.mean,
            std: self.std,
            debounce_k: self.debounce_k,
        };
        let text = serde_json::to_string_pretty(&meta)
            .map_err(|e| Error::Data(format!("meta serialization: {e}")))?;
        atomic_write(&Self::meta_path(path), text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let graph = checkpoint::load(path)?;
        let meta_path = Self::meta_path(path);
        let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: DetectorModelMeta = serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("{}: {e}", meta_path.display())))?;
        if meta.std.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Data("detector meta has non-positive std".into()));
        }
        Ok(DetectorModel {
            graph,
            depth: meta.depth,
            mean: meta.mean,
            std: meta.std,
            debounce_k: meta.debounce_k,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DetectorTrainOutcome {
    pub train_trace: LossTrace,
    pub val_accuracy: Vec<f64>,
    pub best_epoch: u32,
    pub test: DetectorMetrics,
}

fn feature_stats(
    records: &[FeatureRecord],
    indices: &[usize],
) -> ([f64; FEATURE_COUNT], [f64; FEATURE_COUNT]) {
    let n = indices.len() as f64;
    let mut mean = [0.0; FEATURE_COUNT];
    for &i in indices {
        for (j, v) in records[i].features().iter().enumerate() {
            mean[j] += v / n;
        }
    }
    let mut var = [0.0; FEATURE_COUNT];
    for &i in indices {
        for (j, v) in records[i].features().iter().enumerate() {
            var[j] += (v - mean[j]) * (v - mean[j]) / n;
        }
    }
    let mut std = [0.0; FEATURE_COUNT];
    for j in 0..FEATURE_COUNT {
        std[j] = var[j].sqrt().max(1e-9);
    }
    (mean, std)
}

const TAG_DET_SHUFFLE: u64 = 0x62;

/// Adam training on the train split, best checkpoint by validation accuracy,
/// final metrics on the test split.
pub fn train_detector(
    records: &[FeatureRecord],
    cfg: &DetectorConfig,
) -> Result<(DetectorModel, DetectorTrainOutcome)> {
    cfg.validate()?;
    if records.is_empty() {
        return Err(Error::Argument("dataset is empty".into()));
    }
    let (train_idx, val_idx, test_idx) = cfg.split.partition(records.len(), cfg.seed);
    if train_idx.is_empty() || val_idx.is_empty() || test_idx.is_empty() {
        return Err(Error::Argument(
            "dataset too small: a split partition is empty".into(),
        ));
    }
    let classes: std::collections::BTreeSet<u8> =
        train_idx.iter().map(|&i| records[i].label).collect();
    if classes.len() < 2 {
        return Err(Error::Argument(
            "training split contains a single class".into(),
        ));
    }

    let (mean, std) = feature_stats(records, &train_idx);
    let mut model = DetectorModel {
        graph: build_mlp(cfg.depth, cfg.seed)?,
        depth: cfg.depth,
        mean,
        std,
        debounce_k: cfg.debounce_k,
    };

    let all_x = model.standardize(records)?;
    let labels: Vec<u8> = records.iter().map(|r| r.label).collect();
    let gather = |indices: &[usize]| -> (Tensor, Vec<u8>) {
        let mut x = Tensor::zeros(&[indices.len(), FEATURE_COUNT]);
        let mut y = Vec::with_capacity(indices.len());
        for (row, &i) in indices.iter().enumerate() {
            x.data_mut()[row * FEATURE_COUNT..(row + 1) * FEATURE_COUNT]
                .copy_from_slice(&all_x.data()[i * FEATURE_COUNT..(i + 1) * FEATURE_COUNT]);
            y.push(labels[i]);
        }
        (x, y)
    };
    let (val_x, val_y) = gather(&val_idx);
    let (test_x, test_y) = gather(&test_idx);

    let mut opt = Optimizer::adam(cfg.lr, cfg.weight_decay, cfg.schedule);
    let mut trace = LossTrace::default();
    let mut val_accuracy = Vec::new();
    let mut best = (0u32, f64::NEG_INFINITY, checkpoint::to_bytes(&model.graph));
    let mut order = train_idx.clone();

    for epoch in 0..cfg.epochs {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed3(cfg.seed, TAG_DET_SHUFFLE, epoch as u64, 0));
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0.0f64;
        for chunk in order.chunks(cfg.batch_size) {
            let (x, y) = gather(chunk);
            model.graph.zero_grads();
            let logits = model.graph.forward(&x, None)?;
            let (loss, grad) = cross_entropy_loss(&logits, &y)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "detector training diverged at epoch {} (loss {loss})",
                    epoch + 1
                )));
            }
            epoch_loss += loss;
            batches += 1.0;
            model.graph.backward(&grad)?;
            opt.step(&mut model.graph)?;
        }
        opt.end_epoch();
        trace.push(epoch_loss / batches.max(1.0));

        let val_logits = model.graph.forward(&val_x, None)?;
        let val_metrics = evaluate_logits(&val_logits, &val_y)?;
        val_accuracy.push(val_metrics.accuracy);
        if val_metrics.accuracy > best.1 {
            best = (
                epoch + 1,
                val_metrics.accuracy,
                checkpoint::to_bytes(&model.graph),
            );
        }
    }

    model.graph = checkpoint::from_bytes(&best.2)?;
    let test_logits = model.graph.forward(&test_x, None)?;
    let test = evaluate_logits(&test_logits, &test_y)?;
    model.graph.clear_caches();
    Ok((
        model,
        DetectorTrainOutcome {
            train_trace: trace,
            val_accuracy,
            best_epoch: best.0,
            test,
        },
    ))
}
