//! Downstream gaze-regression training. With the backbone frozen, features
//! are computed once and the head trains on the cache; otherwise the whole
//! network trains end to end.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::gaze_l2_loss;
use super::model::{Arch, GazeModel, FEATURE_DIM};
use crate::error::{Error, Result};
use crate::gradcore::{Optimizer, Schedule, Tensor};
use crate::pretext::images_to_tensor;
use crate::synthcam::EyeImage;
use crate::trace::LossTrace;
use crate::util::derive_seed3;

fn default_arch() -> Arch {
    Arch::Lenet5ish
}
fn default_epochs() -> u32 {
    40
}
fn default_batch() -> usize {
    32
}
fn default_lr() -> f64 {
    1e-4
}
fn default_wd() -> f64 {
    1e-4
}
fn default_momentum() -> f64 {
    0.0
}
fn default_schedule() -> Option<Schedule> {
    Some(Schedule {
        factor: 0.1,
        period_epochs: 200,
    })
}
fn default_freeze() -> bool {
    true
}
fn default_eval_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GazeTrainConfig {
    #[serde(default = "default_arch")]
    pub arch: Arch,
    #[serde(default = "default_epochs")]
    pub epochs: u32,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_wd")]
    pub weight_decay: f64,
    /// SGD momentum; 0 is the plain update.
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_schedule")]
    pub schedule: Option<Schedule>,
    #[serde(default = "default_freeze")]
    pub freeze_backbone: bool,
    #[serde(default = "default_eval_fraction")]
    pub eval_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for GazeTrainConfig {
    fn default() -> Self {
        GazeTrainConfig {
            arch: default_arch(),
            epochs: default_epochs(),
            batch_size: default_batch(),
            lr: default_lr(),
            weight_decay: default_wd(),
            momentum: default_momentum(),
            schedule: default_schedule(),
            freeze_backbone: default_freeze(),
            eval_fraction: default_eval_fraction(),
            seed: 0,
        }
    }
}

impl GazeTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "epochs and batch_size must be positive".into(),
            ));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.eval_fraction) {
            return Err(Error::Config("eval_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }
}

fn targets_and_heads(images: &[&EyeImage]) -> (Tensor, Tensor) {
    let n = images.len();
    let mut targets = Tensor::zeros(&[n, 2]);
    let mut heads = Tensor::zeros(&[n, 2]);
    for (i, img) in images.iter().enumerate() {
        targets.data_mut()[i * 2] = img.gaze.yaw;
        targets.data_mut()[i * 2 + 1] = img.gaze.pitch;
        heads.data_mut()[i * 2] = img.head.yaw;
        heads.data_mut()[i * 2 + 1] = img.head.pitch;
    }
    (targets, heads)
}

/// Forward the backbone over all images in bounded chunks; used to cache
/// features when the backbone is frozen.
fn cache_features(model: &mut GazeModel, images: &[&EyeImage]) -> Result<Tensor> {
    let n = images.len();
    let mut features = Tensor::zeros(&[n, FEATURE_DIM]);
    let mut offset = 0;
    for chunk in images.chunks(64) {
        let out = model.backbone.forward(&images_to_tensor(chunk), None)?;
        features.data_mut()[offset..offset + out.len()].copy_from_slice(out.data());
        offset += out.len();
    }
    model.backbone.clear_caches();
    Ok(features)
}

fn gather_rows(src: &Tensor, rows: &[usize]) -> Tensor {
    let d = src.shape()[1];
    let mut out = Tensor::zeros(&[rows.len(), d]);
    for (i, &r) in rows.iter().enumerate() {
        out.data_mut()[i * d..(i + 1) * d].copy_from_slice(&src.data()[r * d..(r + 1) * d]);
    }
    out
}

const TAG_GAZE_SHUFFLE: u64 = 0x31;

/// Trains `model` on `images` with SGD per the config. When
/// `freeze_backbone` is set the backbone parameters stay bitwise unchanged.
/// Returns the per-epoch loss trace.
pub fn finetune(
    model: &mut GazeModel,
    images: &[EyeImage],
    cfg: &GazeTrainConfig,
) -> Result<LossTrace> {
    cfg.validate()?;
    if images.is_empty() {
        return Err(Error::Argument("training set is empty".into()));
    }
    model.frozen = cfg.freeze_backbone;
    model.backbone.set_all_trainable(!cfg.freeze_backbone);

    let refs: Vec<&EyeImage> = images.iter().collect();
    let (targets, heads) = targets_and_heads(&refs);
    let cached = if cfg.freeze_backbone {
        Some(cache_features(model, &refs)?)
    } else {
        None
    };

    let mut head_opt = Optimizer::sgd(cfg.lr, cfg.weight_decay, cfg.momentum, cfg.schedule);
    let mut bb_opt = Optimizer::sgd(cfg.lr, cfg.weight_decay, cfg.momentum, cfg.schedule);
    let mut trace = LossTrace::default();
    let mut order: Vec<usize> = (0..images.len()).collect();

    for epoch in 0..cfg.epochs {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed3(cfg.seed, TAG_GAZE_SHUFFLE, epoch as u64, 0));
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0.0f64;
        for chunk in order.chunks(cfg.batch_size) {
            let batch_heads = gather_rows(&heads, chunk);
            let batch_targets = gather_rows(&targets, chunk);

            model.head.zero_grads();
            let pred = match &cached {
                Some(features) => {
                    let batch_features = gather_rows(features, chunk);
                    model.head.forward(&batch_features, Some(&batch_heads))?
                }
                None => {
                    model.backbone.zero_grads();
                    let imgs: Vec<&EyeImage> = chunk.iter().map(|&i| refs[i]).collect();
                    let features = model.backbone.forward(&images_to_tensor(&imgs), None)?;
                    model.head.forward(&features, Some(&batch_heads))?
                }
            };

            let (loss, grad) = gaze_l2_loss(&pred, &batch_targets)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "gaze training diverged at epoch {} (loss {loss}); trace: {:?}",
                    epoch + 1,
                    trace.mean_loss
                )));
            }
            epoch_loss += loss;
            batches += 1.0;

            let feat_grad = model.head.backward(&grad)?;
            head_opt.step(&mut model.head)?;
            if cached.is_none() {
                model.backbone.backward(&feat_grad)?;
                bb_opt.step(&mut model.backbone)?;
            }
        }
        head_opt.end_epoch();
        bb_opt.end_epoch();
        trace.push(epoch_loss / batches.max(1.0));
    }

    model.backbone.clear_caches();
    model.head.clear_caches();
    Ok(trace)
}

/// Deterministic train/eval split of an image dataset by hashed index.
pub fn split_train_eval(
    images: &[EyeImage],
    eval_fraction: f64,
    seed: u64,
) -> (Vec<EyeImage>, Vec<EyeImage>) {
    let mut train = Vec::new();
    let mut eval = Vec::new();
    for (i, img) in images.iter().enumerate() {
        let u = crate::util::unit_f64(derive_seed3(seed, 0x32, i as u64, 0));
        if u < eval_fraction {
            eval.push(img.clone());
        } else {
            train.push(img.clone());
        }
    }
    (train, eval)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcore::checkpoint;
    use crate::synthcam::{generate_image_dataset, SessionConfig};

    fn small_dataset(n: usize) -> Vec<EyeImage> {
        let cfg = SessionConfig {
            seed: 551,
            ..Default::default()
        };
        generate_image_dataset(&cfg, n).unwrap()
    }

    fn quick_cfg(freeze: bool, epochs: u32) -> GazeTrainConfig {
        GazeTrainConfig {
            arch: Arch::Tinyconv,
            epochs,
            batch_size: 16,
            lr: 1e-3,
            weight_decay: 0.0,
            momentum: 0.0,
            schedule: None,
            freeze_backbone: freeze,
            eval_fraction: 0.2,
            seed: 3,
        }
    }

    #[test]
    fn freeze_keeps_backbone_bytes_unchanged() {
        let images = small_dataset(48);
        let mut model = GazeModel::new(Arch::Tinyconv, 8);
        let before = checkpoint::to_bytes(&model.backbone);
        finetune(&mut model, &images, &quick_cfg(true, 10)).unwrap();
        let after = checkpoint::to_bytes(&model.backbone);
        assert_eq!(before, after);
    }

    #[test]
    fn unfrozen_backbone_changes() {
        let images = small_dataset(32);
        let mut model = GazeModel::new(Arch::Tinyconv, 8);
        let before = checkpoint::to_bytes(&model.backbone);
        finetune(&mut model, &images, &quick_cfg(false, 2)).unwrap();
        assert_ne!(before, checkpoint::to_bytes(&model.backbone));
    }

    #[test]
    fn training_loss_decreases() {
        let images = small_dataset(96);
        let mut model = GazeModel::new(Arch::Tinyconv, 11);
        let trace = finetune(&mut model, &images, &quick_cfg(false, 12)).unwrap();
        assert!(
            trace.last().unwrap() < trace.first().unwrap(),
            "trace: {:?}",
            trace.mean_loss
        );
    }

    #[test]
    fn identical_config_gives_identical_traces() {
        let images = small_dataset(32);
        let mut m1 = GazeModel::new(Arch::Tinyconv, 21);
        let mut m2 = GazeModel::new(Arch::Tinyconv, 21);
        let t1 = finetune(&mut m1, &images, &quick_cfg(true, 5)).unwrap();
        let t2 = finetune(&mut m2, &images, &quick_cfg(true, 5)).unwrap();
        assert_eq!(t1, t2);
        // and the resulting weights match bitwise
        assert_eq!(
            checkpoint::to_bytes(&m1.head),
            checkpoint::to_bytes(&m2.head)
        );
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let images = small_dataset(100);
        let (tr1, ev1) = split_train_eval(&images, 0.2, 9);
        let (tr2, ev2) = split_train_eval(&images, 0.2, 9);
        assert_eq!(tr1.len(), tr2.len());
        assert_eq!(ev1.len(), ev2.len());
        assert_eq!(tr1.len() + ev1.len(), images.len());
        assert!(ev1.len() > 5 && ev1.len() < 40);
    }
}
