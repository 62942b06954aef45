//! Deterministic synthetic eye-image rendering.
//!
//! The image is a light sclera ellipse on a skin background, a dark iris
//! disk displaced from image center by (K_X * yaw, -K_Y * pitch) pixels,
//! flat eyelid bands at the top and bottom, and additive Gaussian pixel
//! noise. The sclera ellipse shifts slightly with head pose so the head
//! channels carry signal.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::types::{EyeImage, GazeAngles, HeadPose, IMG_HEIGHT, IMG_WIDTH};
use crate::error::{Error, Result};

/// Iris displacement gains, pixels per radian of gaze.
pub const K_X: f64 = 22.0;
pub const K_Y: f64 = 14.0;

/// Sclera ellipse shift, pixels per radian of head pose.
const HEAD_SHIFT_X: f64 = 3.0;
const HEAD_SHIFT_Y: f64 = 2.0;

const CENTER_X: f64 = 30.0;
const CENTER_Y: f64 = 18.0;
const SCLERA_A: f64 = 27.0;
const SCLERA_B: f64 = 13.0;
const IRIS_RADIUS: f64 = 5.5;

const VAL_BACKGROUND: f64 = 0.35;
const VAL_SCLERA: f64 = 0.9;
const VAL_IRIS: f64 = 0.15;
const VAL_LID: f64 = 0.5;
const NOISE_SIGMA: f64 = 0.02;

fn coverage(signed_dist: f64) -> f64 {
    // 1 inside, 0 outside, linear ramp over one pixel
    (0.5 - signed_dist).clamp(0.0, 1.0)
}

/// Renders one eye image; bit-identical for identical (gaze, head, seed).
/// Rejects gaze angles that would put the iris center outside the sclera.
pub fn render_eye_image(gaze: GazeAngles, head: HeadPose, seed: u64) -> Result<EyeImage> {
    gaze.validate()?;
    head.validate()?;

    let ellipse_cx = CENTER_X + HEAD_SHIFT_X * head.yaw;
    let ellipse_cy = CENTER_Y - HEAD_SHIFT_Y * head.pitch;
    let iris_cx = CENTER_X + K_X * gaze.yaw;
    let iris_cy = CENTER_Y - K_Y * gaze.pitch;

    let rel_x = (iris_cx - ellipse_cx) / SCLERA_A;
    let rel_y = (iris_cy - ellipse_cy) / SCLERA_B;
    if rel_x * rel_x + rel_y * rel_y > 1.0 {
        return Err(Error::Argument(format!(
            "iris center ({iris_cx:.1}, {iris_cy:.1}) falls outside the sclera ellipse \
             for gaze ({}, {})",
            gaze.yaw, gaze.pitch
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blink: f64 = rng.gen_range(0.0..1.0);
    let top_lid = 3.0 + 2.0 * blink;
    let bottom_lid_start = IMG_HEIGHT as f64 - 3.0;
    let normal = Normal::new(0.0, NOISE_SIGMA).expect("valid sigma");

    let mut pixels = vec![0.0f64; IMG_WIDTH * IMG_HEIGHT];
    for row in 0..IMG_HEIGHT {
        for col in 0..IMG_WIDTH {
            let x = col as f64;
            let y = row as f64;

            // sclera ellipse over background, soft edge via the implicit value
            let ex = (x - ellipse_cx) / SCLERA_A;
            let ey = (y - ellipse_cy) / SCLERA_B;
            let e = ex * ex + ey * ey;
            let sclera_cov = ((1.0 - e) * 8.0 + 0.5).clamp(0.0, 1.0);
            let mut v = VAL_BACKGROUND + (VAL_SCLERA - VAL_BACKGROUND) * sclera_cov;

            // iris disk
            let d = ((x - iris_cx).powi(2) + (y - iris_cy).powi(2)).sqrt();
            let iris_cov = coverage(d - IRIS_RADIUS);
            v += (VAL_IRIS - v) * iris_cov;

            // eyelid bands occlude whatever is underneath
            if y < top_lid || y >= bottom_lid_start {
                v = VAL_LID;
            }

            v += normal.sample(&mut rng);
            pixels[row * IMG_WIDTH + col] = v.clamp(0.0, 1.0);
        }
    }
    EyeImage::new(pixels, gaze, head)
}
