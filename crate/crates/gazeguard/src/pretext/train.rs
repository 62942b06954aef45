//! The pretext training loop: augment a batch into 2N views, embed them
//! through backbone + projection head, and minimize the contrastive loss.
//! The projection head is discarded downstream; only the backbone checkpoint
//! moves on.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::augment::{make_views, AugmentationSpec};
use super::loss::{nt_xent_loss, ContrastiveBatch};
use crate::error::{Error, Result};
use crate::gradcore::{Dense, Layer, LayerGraph, OptKind, Optimizer, Relu, Schedule, Tensor};
use crate::synthcam::{EyeImage, IMG_HEIGHT, IMG_WIDTH};
use crate::trace::LossTrace;
use crate::util::derive_seed3;

fn default_epochs() -> u32 {
    12
}
fn default_batch() -> usize {
    64
}
fn default_temperature() -> f64 {
    0.5
}
fn default_optimizer() -> OptKind {
    OptKind::Adam
}
fn default_lr() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretextConfig {
    #[serde(default = "default_epochs")]
    pub epochs: u32,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptKind,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default)]
    pub schedule: Option<Schedule>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub augmentation: AugmentationSpec,
}

impl Default for PretextConfig {
    fn default() -> Self {
        PretextConfig {
            epochs: default_epochs(),
            batch_size: default_batch(),
            temperature: default_temperature(),
            optimizer: default_optimizer(),
            lr: default_lr(),
            weight_decay: 0.0,
            schedule: None,
            seed: 0,
            augmentation: AugmentationSpec::default(),
        }
    }
}

impl PretextConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "epochs and batch_size must be positive".into(),
            ));
        }
        if self.temperature <= 0.0 {
            return Err(Error::Config("temperature must be positive".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        self.augmentation.validate()
    }
}

/// dense 128 -> 64 -> relu -> dense 64 -> 32
pub fn projection_head(feature_dim: usize, seed: u64) -> LayerGraph {
    LayerGraph::new(vec![
        Layer::Dense(Dense::new(feature_dim, 64, seed.wrapping_add(1))),
        Layer::Relu(Relu::new()),
        Layer::Dense(Dense::new(64, 32, seed.wrapping_add(2))),
    ])
    .expect("projection head is a valid graph")
}

/// Stacks images into an (N, 1, H, W) tensor.
pub fn images_to_tensor(images: &[&EyeImage]) -> Tensor {
    let n = images.len();
    let mut t = Tensor::zeros(&[n, 1, IMG_HEIGHT, IMG_WIDTH]);
    {
        let data = t.data_mut();
        for (i, img) in images.iter().enumerate() {
            data[i * IMG_HEIGHT * IMG_WIDTH..(i + 1) * IMG_HEIGHT * IMG_WIDTH]
                .copy_from_slice(&img.pixels);
        }
    }
    t
}

#[derive(Debug)]
pub struct PretrainResult {
    pub backbone: LayerGraph,
    pub projection: LayerGraph,
    pub trace: LossTrace,
}

const TAG_SHUFFLE: u64 = 0x21;
const TAG_BATCH: u64 = 0x22;

/// Minimizes the contrastive loss over augmented view pairs. Returns the
/// trained backbone (the projection head is returned too, but downstream
/// training drops it) plus the per-epoch loss trace.
pub fn pretrain(
    images: &[EyeImage],
    mut backbone: LayerGraph,
    mut projection: LayerGraph,
    cfg: &PretextConfig,
) -> Result<PretrainResult> {
    cfg.validate()?;
    if images.is_empty() {
        return Err(Error::Argument(
            "pretraining needs at least one image".into(),
        ));
    }
    if backbone.has_aux_junction() {
        return Err(Error::Structure(
            "pretext backbone must not contain an aux junction".into(),
        ));
    }

    let mut bb_opt = Optimizer::new(cfg.optimizer, cfg.lr, cfg.weight_decay, cfg.schedule);
    let mut pr_opt = Optimizer::new(cfg.optimizer, cfg.lr, cfg.weight_decay, cfg.schedule);
    let mut trace = LossTrace::default();

    let mut order: Vec<usize> = (0..images.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed3(cfg.seed, TAG_SHUFFLE, epoch as u64, 0));
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        let mut batches = 0.0f64;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            if chunk.len() < 2 && order.len() >= 2 {
                continue; // a singleton tail batch has no negatives
            }
            let batch_imgs: Vec<EyeImage> = chunk.iter().map(|&i| images[i].clone()).collect();
            let view_seed = derive_seed3(cfg.seed, TAG_BATCH, epoch as u64, batch_idx as u64);
            let (views, pairing) = make_views(&batch_imgs, &cfg.augmentation, view_seed)?;

            let view_refs: Vec<&EyeImage> = views.iter().collect();
            let input = images_to_tensor(&view_refs);
            backbone.zero_grads();
            projection.zero_grads();
            let features = backbone.forward(&input, None)?;
            let embeddings = projection.forward(&features, None)?;

            let batch = ContrastiveBatch::new(embeddings, pairing, cfg.temperature)?;
            let (loss, grad) = nt_xent_loss(&batch)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "pretraining diverged at epoch {} (loss {loss}); trace so far: {:?}",
                    epoch + 1,
                    trace.mean_loss
                )));
            }
            epoch_loss += loss;
            batches += 1.0;

            let feat_grad = projection.backward(&grad)?;
            backbone.backward(&feat_grad)?;
            pr_opt.step(&mut projection)?;
            bb_opt.step(&mut backbone)?;
        }
        bb_opt.end_epoch();
        pr_opt.end_epoch();
        trace.push(epoch_loss / batches.max(1.0));
    }

    backbone.clear_caches();
    projection.clear_caches();
    Ok(PretrainResult {
        backbone,
        projection,
        trace,
    })
}
