//! Gaze regression model: a CNN backbone feeding a head-pose-fused dense
//! head that emits (yaw, pitch) in radians.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradcore::{
    checkpoint, ConcatAux, Conv2d, Dense, Flatten, Layer, LayerGraph, MaxPool2d, Relu, Tensor,
};
use crate::pretext::images_to_tensor;
use crate::synthcam::{EyeImage, GazeAngles, HeadPose};
use crate::util::atomic_write;

pub const FEATURE_DIM: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Lenet5ish,
    Tinyconv,
}

impl std::str::FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lenet5ish" => Ok(Arch::Lenet5ish),
            "tinyconv" => Ok(Arch::Tinyconv),
            other => Err(Error::Argument(format!(
                "unknown arch {other:?} (expected lenet5ish or tinyconv)"
            ))),
        }
    }
}

impl std::fmt::Display for Arch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Arch::Lenet5ish => write!(f, "lenet5ish"),
            Arch::Tinyconv => write!(f, "tinyconv"),
        }
    }
}

/// Backbone for 60x36 inputs, emitting a 128-dim feature vector.
///
/// lenet5ish: conv(1->16,5x5) relu pool -> conv(16->32,5x5) relu pool ->
/// flatten -> dense(2304->128). tinyconv: a single conv block with two pools,
/// conv(1->8,5x5) relu pool pool -> flatten -> dense(896->128).
pub fn build_backbone(arch: Arch, seed: u64) -> LayerGraph {
    let layers = match arch {
        Arch::Lenet5ish => vec![
            Layer::Conv2d(Conv2d::new(1, 16, 5, 5, seed.wrapping_add(1))),
            Layer::Relu(Relu::new()),
            Layer::MaxPool2d(MaxPool2d::new()),
            Layer::Conv2d(Conv2d::new(16, 32, 5, 5, seed.wrapping_add(2))),
            Layer::Relu(Relu::new()),
            Layer::MaxPool2d(MaxPool2d::new()),
            Layer::Flatten(Flatten::new()),
            Layer::Dense(Dense::new(32 * 6 * 12, FEATURE_DIM, seed.wrapping_add(3))),
        ],
        Arch::Tinyconv => vec![
            Layer::Conv2d(Conv2d::new(1, 8, 5, 5, seed.wrapping_add(1))),
            Layer::Relu(Relu::new()),
            Layer::MaxPool2d(MaxPool2d::new()),
            Layer::MaxPool2d(MaxPool2d::new()),
            Layer::Flatten(Flatten::new()),
            Layer::Dense(Dense::new(8 * 8 * 14, FEATURE_DIM, seed.wrapping_add(3))),
        ],
    };
    LayerGraph::new(layers).expect("backbone is a valid graph")
}

/// dense(130->64) relu dense(64->2), with the head-pose junction in front.
pub fn build_gaze_head(seed: u64) -> LayerGraph {
    LayerGraph::new(vec![
        Layer::ConcatAux(ConcatAux::new(2)),
        Layer::Dense(Dense::new(FEATURE_DIM + 2, 64, seed.wrapping_add(7))),
        Layer::Relu(Relu::new()),
        Layer::Dense(Dense::new(64, 2, seed.wrapping_add(8))),
    ])
    .expect("gaze head is a valid graph")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GazeModelMeta {
    pub arch: Arch,
    pub backbone_len: usize,
    pub frozen: bool,
    #[serde(default)]
    pub pretext_checkpoint: Option<String>,
}

#[derive(Debug, Clone)]
pub struct GazeModel {
    pub backbone: LayerGraph,
    pub head: LayerGraph,
    pub arch: Arch,
    pub frozen: bool,
    pub pretext_id: Option<String>,
}

impl GazeModel {
    pub fn new(arch: Arch, seed: u64) -> Self {
        GazeModel {
            backbone: build_backbone(arch, seed),
            head: build_gaze_head(seed),
            arch,
            frozen: false,
            pretext_id: None,
        }
    }

    /// Wraps a pretext-pretrained backbone with a fresh head.
    pub fn from_pretext(
        arch: Arch,
        backbone: LayerGraph,
        pretext_id: Option<String>,
        seed: u64,
    ) -> Result<Self> {
        let expected = build_backbone(arch, 0);
        if backbone.layer_count() != expected.layer_count() {
            return Err(Error::Structure(format!(
                "pretext backbone has {} layers, arch {arch} expects {}",
                backbone.layer_count(),
                expected.layer_count()
            )));
        }
        Ok(GazeModel {
            backbone,
            head: build_gaze_head(seed),
            arch,
            frozen: false,
            pretext_id,
        })
    }

    /// Batched prediction: images (N), head poses (N, 2) -> (N, 2).
    pub fn forward_batch(&mut self, images: &[&EyeImage], heads: &Tensor) -> Result<Tensor> {
        let input = images_to_tensor(images);
        let features = self.backbone.forward(&input, None)?;
        self.head.forward(&features, Some(heads))
    }

    /// Single-frame prediction in radians.
    pub fn gaze_forward(&mut self, image: &EyeImage, head: HeadPose) -> Result<GazeAngles> {
        let heads = Tensor::from_vec(&[1, 2], vec![head.yaw, head.pitch])?;
        let out = self.forward_batch(&[image], &heads)?;
        Ok(GazeAngles {
            yaw: out.data()[0],
            pitch: out.data()[1],
        })
    }

    pub fn meta(&self) -> GazeModelMeta {
        GazeModelMeta {
            arch: self.arch,
            backbone_len: self.backbone.layer_count(),
            frozen: self.frozen,
            pretext_checkpoint: self.pretext_id.clone(),
        }
    }

    fn meta_path(path: &Path) -> std::path::PathBuf {
        let mut p = path.as_os_str().to_owned();
        p.push(".meta.json");
        std::path::PathBuf::from(p)
    }

    /// One checkpoint holding backbone + head layers, with a JSON sidecar for
    /// the split point and provenance.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut layers = self.backbone.layers().to_vec();
        layers.extend(self.head.layers().iter().cloned());
        let mut combined = LayerGraph::new(layers)?;
        combined.clear_caches();
        checkpoint::save(&combined, path)?;
        let meta = serde_json::to_string_pretty(&self.meta())
            .map_err(|e| Error::Data(format!("meta serialization: {e}")))?;
        atomic_write(&Self::meta_path(path), meta.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let combined = checkpoint::load(path)?;
        let meta_path = Self::meta_path(path);
        let meta_text =
            std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: GazeModelMeta = serde_json::from_str(&meta_text)
            .map_err(|e| Error::Data(format!("{}: {e}", meta_path.display())))?;
        if meta.backbone_len > combined.layer_count() {
            return Err(Error::Checkpoint {
                path: path.to_path_buf(),
                reason: format!(
                    "meta claims {} backbone layers but checkpoint has {}",
                    meta.backbone_len,
                    combined.layer_count()
                ),
            });
        }
        let layers = combined.layers().to_vec();
        let (bb, hd) = layers.split_at(meta.backbone_len);
        Ok(GazeModel {
            backbone: LayerGraph::new(bb.to_vec())?,
            head: LayerGraph::new(hd.to_vec())?,
            arch: meta.arch,
            frozen: meta.frozen,
            pretext_id: meta.pretext_checkpoint,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthcam::render_eye_image;

    fn sample_image() -> EyeImage {
        render_eye_image(
            GazeAngles {
                yaw: 0.15,
                pitch: -0.1,
            },
            HeadPose {
                yaw: 0.05,
                pitch: 0.02,
            },
            42,
        )
        .unwrap()
    }

    #[test]
    fn lenet5ish_emits_128_features_from_60x36() {
        // shape arithmetic: (36,60) -conv5-> (32,56) -pool-> (16,28)
        // -conv5-> (12,24) -pool-> (6,12); 32*6*12 = 2304 -> 128
        let mut bb = build_backbone(Arch::Lenet5ish, 1);
        let img = sample_image();
        let out = bb.forward(&images_to_tensor(&[&img]), None).unwrap();
        assert_eq!(out.shape(), &[1, FEATURE_DIM]);
    }

    #[test]
    fn tinyconv_is_smaller_than_lenet5ish() {
        let lenet = build_backbone(Arch::Lenet5ish, 1);
        let tiny = build_backbone(Arch::Tinyconv, 1);
        // counting oracle: conv 16*1*25+16 + conv 32*16*25+32 + dense 2304*128+128
        let lenet_expected = (16 * 25 + 16) + (32 * 16 * 25 + 32) + (2304 * 128 + 128);
        assert_eq!(lenet.param_count(), lenet_expected);
        let tiny_expected = (8 * 25 + 8) + (896 * 128 + 128);
        assert_eq!(tiny.param_count(), tiny_expected);
        assert!(tiny.param_count() < lenet.param_count());

        let mut tiny = tiny;
        let img = sample_image();
        let out = tiny.forward(&images_to_tensor(&[&img]), None).unwrap();
        assert_eq!(out.shape(), &[1, FEATURE_DIM]);
    }

    #[test]
    fn both_archs_pass_grad_check_on_sampled_params() {
        use crate::gradcore::{grad_check, gradcheck::DEFAULT_STEP};
        for arch in [Arch::Lenet5ish, Arch::Tinyconv] {
            let mut g = build_backbone(arch, 3);
            let img = sample_image();
            let x = images_to_tensor(&[&img]);
            let report = grad_check(&mut g, &x, None, DEFAULT_STEP, Some(8), 17).unwrap();
            assert!(
                report.passes(1e-4),
                "{arch}: max rel err {}",
                report.max_rel_error
            );
        }
    }

    #[test]
    fn zero_weight_head_predicts_zero() {
        let mut model = GazeModel::new(Arch::Tinyconv, 5);
        for (_, _, view) in model.head.param_views() {
            view.values.fill(0.0);
        }
        let pred = model
            .gaze_forward(
                &sample_image(),
                HeadPose {
                    yaw: 0.3,
                    pitch: -0.2,
                },
            )
            .unwrap();
        assert_eq!(
            pred,
            GazeAngles {
                yaw: 0.0,
                pitch: 0.0
            }
        );
    }

    #[test]
    fn head_pose_input_changes_output() {
        let mut model = GazeModel::new(Arch::Tinyconv, 6);
        let img = sample_image();
        let a = model
            .gaze_forward(
                &img,
                HeadPose {
                    yaw: 0.0,
                    pitch: 0.0,
                },
            )
            .unwrap();
        let b = model
            .gaze_forward(
                &img,
                HeadPose {
                    yaw: 0.4,
                    pitch: -0.3,
                },
            )
            .unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn forward_matches_hand_oracle_with_fixed_weights() {
        // single-pixel-free check on the head alone: zero the backbone
        // features by zeroing its dense layer, then the head output is
        // b2 + relu(b1 + head . W_aux) . W2 computed by hand
        let mut model = GazeModel::new(Arch::Tinyconv, 7);
        let n_bb = model.backbone.layer_count();
        {
            let mut views = model.backbone.param_views();
            let (_, _, last_dense) = views
                .iter_mut()
                .filter(|(l, _, _)| *l == n_bb - 1)
                .next()
                .unwrap();
            last_dense.values.fill(0.0);
        }
        // also zero the final-dense bias (slot 1)
        {
            let mut views = model.backbone.param_views();
            for (l, _, view) in views.iter_mut() {
                if *l == n_bb - 1 {
                    view.values.fill(0.0);
                }
            }
        }
        let head_pose = HeadPose {
            yaw: 0.2,
            pitch: -0.1,
        };
        let pred = model.gaze_forward(&sample_image(), head_pose).unwrap();

        // hand-compute: features are all zero, so dense1 sees
        // [0; 128] ++ [yaw, pitch]
        let layers = model.head.layers();
        let (w1, b1) = match &layers[1] {
            Layer::Dense(d) => (&d.weight, &d.bias),
            _ => panic!("expected dense"),
        };
        let (w2, b2) = match &layers[3] {
            Layer::Dense(d) => (&d.weight, &d.bias),
            _ => panic!("expected dense"),
        };
        let mut hidden = vec![0.0f64; 64];
        for j in 0..64 {
            let mut acc = b1.data()[j];
            acc += head_pose.yaw * w1.data()[128 * 64 + j];
            acc += head_pose.pitch * w1.data()[129 * 64 + j];
            hidden[j] = acc.max(0.0);
        }
        let mut out = [b2.data()[0], b2.data()[1]];
        for (j, h) in hidden.iter().enumerate() {
            out[0] += h * w2.data()[j * 2];
            out[1] += h * w2.data()[j * 2 + 1];
        }
        assert!((pred.yaw - out[0]).abs() < 1e-12);
        assert!((pred.pitch - out[1]).abs() < 1e-12);
    }

    #[test]
    fn save_load_round_trips_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gaze.ggck");
        let mut model = GazeModel::new(Arch::Tinyconv, 9);
        model.pretext_id = Some("pretext-abc".into());
        let img = sample_image();
        let before = model
            .gaze_forward(
                &img,
                HeadPose {
                    yaw: 0.1,
                    pitch: 0.1,
                },
            )
            .unwrap();
        model.save(&path).unwrap();
        let mut loaded = GazeModel::load(&path).unwrap();
        let after = loaded
            .gaze_forward(
                &img,
                HeadPose {
                    yaw: 0.1,
                    pitch: 0.1,
                },
            )
            .unwrap();
        assert_eq!(before, after);
        assert_eq!(loaded.arch, Arch::Tinyconv);
        assert_eq!(loaded.pretext_id.as_deref(), Some("pretext-abc"));
    }
}
