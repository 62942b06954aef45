//! Gaze-ray geometry: angle/vector conversion, ray-plane intersection, and
//! normal-region labeling.

use super::types::{GazeAngles, ScreenHit, SessionConfig};

/// Unit gaze direction for (yaw, pitch):
/// (sin(yaw)cos(pitch), sin(pitch), -cos(yaw)cos(pitch)).
/// The z component is strictly negative for valid angles (toward the screen).
pub fn gaze_to_vector(a: GazeAngles) -> [f64; 3] {
    debug_assert!(a.validate().is_ok());
    let (sy, cy) = a.yaw.sin_cos();
    let (sp, cp) = a.pitch.sin_cos();
    [sy * cp, sp, -cy * cp]
}

/// Inverse of `gaze_to_vector` for any direction with negative z;
/// the input need not be normalized.
pub fn vector_to_gaze(v: [f64; 3]) -> GazeAngles {
    let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    GazeAngles {
        yaw: v[0].atan2(-v[2]),
        pitch: (v[1] / norm).asin(),
    }
}

/// Intersects the gaze ray from `eye_pos` (z > 0) with the screen plane
/// z = 0. Returns `Away` when the ray points away from the plane.
pub fn intersect_screen(eye_pos: [f64; 3], gaze: GazeAngles) -> ScreenHit {
    debug_assert!(eye_pos[2] > 0.0, "subject must sit in front of the screen");
    let v = gaze_to_vector(gaze);
    if v[2] >= 0.0 {
        return ScreenHit::Away;
    }
    let t = -eye_pos[2] / v[2];
    ScreenHit::Hit {
        x_m: eye_pos[0] + t * v[0],
        y_m: eye_pos[1] + t * v[1],
    }
}

/// 1 iff the hit lies inside the closed normal rectangle
/// (screen extended by the margin on every side), else 0.
pub fn label_sample(hit: ScreenHit, cfg: &SessionConfig) -> u8 {
    match hit {
        ScreenHit::Away => 0,
        ScreenHit::Hit { x_m, y_m } => {
            let half_w = cfg.screen_width_m / 2.0 + cfg.margin_m;
            let half_h = cfg.screen_height_m / 2.0 + cfg.margin_m;
            u8::from(x_m.abs() <= half_w && y_m.abs() <= half_h)
        }
    }
}
