//! Dataset generation. Every sample derives its own RNG stream from
//! (seed, sample index), so generation is embarrassingly parallel and
//! bit-identical regardless of parallelism.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::geometry::{gaze_to_vector, intersect_screen, label_sample, vector_to_gaze};
use super::render::render_eye_image;
use super::types::{
    EyeImage, FeatureRecord, GazeAngles, HeadPose, ScreenHit, SessionConfig, EYE_OFFSET_M,
};
use crate::error::{Error, Result};
use crate::util::derive_seed3;

const TAG_IMAGE: u64 = 0x01;
const TAG_RENDER: u64 = 0x02;
const TAG_FEATURE: u64 = 0x03;
const TAG_SESSION_RENDER: u64 = 0x04;

const MAX_BALANCE_TRIES: u64 = 10_000;

fn deg_to_rad(d: f64) -> f64 {
    d * std::f64::consts::PI / 180.0
}

fn sample_range(rng: &mut ChaCha8Rng, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.gen_range(range[0]..range[1])
    }
}

/// Clamp noisy angles back into the valid open interval.
fn clamp_angle(a: f64) -> f64 {
    let lim = std::f64::consts::FRAC_PI_2 - 1e-6;
    a.clamp(-lim, lim)
}

/// One sampled frame with both the clean geometry (labels are computed from
/// it) and the noisy recorded values (what an estimator would output).
#[derive(Debug, Clone, Copy)]
pub struct Frame {
    pub clean_gaze: GazeAngles,
    pub clean_head: HeadPose,
    pub clean_left: GazeAngles,
    pub clean_right: GazeAngles,
    pub clean_distance_m: f64,
    pub recorded_left: GazeAngles,
    pub recorded_right: GazeAngles,
    pub recorded_head: HeadPose,
    pub recorded_distance_m: f64,
    pub label: u8,
}

impl Frame {
    pub fn record(&self) -> FeatureRecord {
        FeatureRecord {
            left_eye: self.recorded_left,
            right_eye: self.recorded_right,
            head: self.recorded_head,
            distance_m: self.recorded_distance_m,
            label: self.label,
        }
    }
}

/// Samples one frame: head at (0, 0, d), midpoint gaze ray aimed per the
/// sampled angles, per-eye angles recomputed toward the midpoint ray's
/// screen-plane target from eyes offset +-EYE_OFFSET_M along x.
fn sample_frame(cfg: &SessionConfig, rng: &mut ChaCha8Rng) -> Frame {
    let d = sample_range(rng, cfg.distance_range_m);
    let gaze = GazeAngles {
        yaw: sample_range(rng, cfg.yaw_range_rad),
        pitch: sample_range(rng, cfg.pitch_range_rad),
    };
    let head = HeadPose {
        yaw: sample_range(rng, cfg.yaw_range_rad),
        pitch: sample_range(rng, cfg.pitch_range_rad),
    };

    let head_center = [0.0, 0.0, d];
    let hit = intersect_screen(head_center, gaze);
    let label = label_sample(hit, cfg);

    // Per-eye angles toward the midpoint ray's plane target. The target may
    // be off-screen; it always exists because valid gaze has negative z.
    let (tx, ty) = match hit {
        ScreenHit::Hit { x_m, y_m } => (x_m, y_m),
        ScreenHit::Away => unreachable!("valid gaze angles always reach the plane"),
    };
    let left_pos = [-EYE_OFFSET_M, 0.0, d];
    let right_pos = [EYE_OFFSET_M, 0.0, d];
    let clean_left = vector_to_gaze([tx - left_pos[0], ty - left_pos[1], -d]);
    let clean_right = vector_to_gaze([tx - right_pos[0], ty - right_pos[1], -d]);

    let sigma = deg_to_rad(cfg.label_noise_deg);
    let mut noisy = |a: f64| -> f64 {
        if sigma == 0.0 {
            a
        } else {
            let n = Normal::new(0.0, sigma).expect("valid sigma");
            clamp_angle(a + n.sample(rng))
        }
    };
    let recorded_left = GazeAngles {
        yaw: noisy(clean_left.yaw),
        pitch: noisy(clean_left.pitch),
    };
    let recorded_right = GazeAngles {
        yaw: noisy(clean_right.yaw),
        pitch: noisy(clean_right.pitch),
    };
    let recorded_head = HeadPose {
        yaw: noisy(head.yaw),
        pitch: noisy(head.pitch),
    };
    let dist_noise = Normal::new(0.0, 0.01).expect("valid sigma");
    let recorded_distance = (d + dist_noise.sample(rng)).max(1e-3);

    Frame {
        clean_gaze: gaze,
        clean_head: head,
        clean_left,
        clean_right,
        clean_distance_m: d,
        recorded_left,
        recorded_right,
        recorded_head,
        recorded_distance_m: recorded_distance,
        label,
    }
}

/// Samples the frame for dataset slot `index`, optionally rejection-sampling
/// until the label matches the balanced target (index parity).
pub fn sample_frame_at(cfg: &SessionConfig, index: u64, balanced: bool) -> Result<Frame> {
    if !balanced {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed3(cfg.seed, TAG_FEATURE, index, 0));
        return Ok(sample_frame(cfg, &mut rng));
    }
    let target = (index % 2) as u8;
    for attempt in 0..MAX_BALANCE_TRIES {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed3(cfg.seed, TAG_FEATURE, index, attempt + 1));
        let frame = sample_frame(cfg, &mut rng);
        if frame.label == target {
            return Ok(frame);
        }
    }
    Err(Error::Config(format!(
        "cannot reach a balanced label {target} with this geometry \
         (gave up after {MAX_BALANCE_TRIES} tries at index {index})"
    )))
}

/// n eye images with gaze/head sampled uniformly from the config ranges.
/// Recorded gaze/head labels carry `label_noise_deg` of jitter; rendering
/// uses the clean angles.
pub fn generate_image_dataset(cfg: &SessionConfig, n: usize) -> Result<Vec<EyeImage>> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::Argument("image count must be positive".into()));
    }
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed3(cfg.seed, TAG_IMAGE, i, 0));
            let gaze = GazeAngles {
                yaw: sample_range(&mut rng, cfg.yaw_range_rad),
                pitch: sample_range(&mut rng, cfg.pitch_range_rad),
            };
            let head = HeadPose {
                yaw: sample_range(&mut rng, cfg.yaw_range_rad),
                pitch: sample_range(&mut rng, cfg.pitch_range_rad),
            };
            let mut img = render_eye_image(gaze, head, derive_seed3(cfg.seed, TAG_RENDER, i, 0))?;
            let sigma = deg_to_rad(cfg.label_noise_deg);
            if sigma > 0.0 {
                let normal = Normal::new(0.0, sigma).expect("valid sigma");
                img.gaze = GazeAngles {
                    yaw: clamp_angle(gaze.yaw + normal.sample(&mut rng)),
                    pitch: clamp_angle(gaze.pitch + normal.sample(&mut rng)),
                };
                img.head = HeadPose {
                    yaw: clamp_angle(head.yaw + normal.sample(&mut rng)),
                    pitch: clamp_angle(head.pitch + normal.sample(&mut rng)),
                };
            }
            Ok(img)
        })
        .collect()
}

/// n feature records; balanced alternates target labels per index.
pub fn generate_feature_dataset(
    cfg: &SessionConfig,
    n: usize,
    balanced: bool,
) -> Result<Vec<FeatureRecord>> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::Argument("record count must be positive".into()));
    }
    let frames: Result<Vec<Frame>> = (0..n as u64)
        .into_par_iter()
        .map(|i| sample_frame_at(cfg, i, balanced))
        .collect();
    Ok(frames?.into_iter().map(|f| f.record()).collect())
}

/// One session frame: rendered left/right eye images plus the recorded
/// head/distance values and the clean truth label.
#[derive(Debug, Clone)]
pub struct SessionFrame {
    pub left_img: EyeImage,
    pub right_img: EyeImage,
    pub head: HeadPose,
    pub distance_m: f64,
    pub label: u8,
}

/// A session: frames sampled like the feature dataset, each with the two
/// per-eye images rendered from the clean per-eye angles.
pub fn generate_session(cfg: &SessionConfig, n: usize) -> Result<Vec<SessionFrame>> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::Argument("session length must be positive".into()));
    }
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let frame = sample_frame_at(cfg, i, false)?;
            let mut left_img = render_eye_image(
                frame.clean_left,
                frame.clean_head,
                derive_seed3(cfg.seed, TAG_SESSION_RENDER, i, 0),
            )?;
            let mut right_img = render_eye_image(
                frame.clean_right,
                frame.clean_head,
                derive_seed3(cfg.seed, TAG_SESSION_RENDER, i, 1),
            )?;
            left_img.gaze = frame.recorded_left;
            right_img.gaze = frame.recorded_right;
            left_img.head = frame.recorded_head;
            right_img.head = frame.recorded_head;
            Ok(SessionFrame {
                left_img,
                right_img,
                head: frame.recorded_head,
                distance_m: frame.recorded_distance_m,
                label: frame.label,
            })
        })
        .collect()
}

/// Independent label re-computation for a frame's stored clean geometry.
/// Used by verification suites; deliberately re-derives the ray from scratch.
pub fn recompute_label(frame: &Frame, cfg: &SessionConfig) -> u8 {
    let v = gaze_to_vector(frame.clean_gaze);
    let d = frame.clean_distance_m;
    // walk the ray analytically: p = (0,0,d) + t v with p_z = 0
    let t = d / (-v[2]);
    let x = t * v[0];
    let y = t * v[1];
    let half_w = cfg.screen_width_m / 2.0 + cfg.margin_m;
    let half_h = cfg.screen_height_m / 2.0 + cfg.margin_m;
    u8::from(x.abs() <= half_w && y.abs() <= half_h)
}
