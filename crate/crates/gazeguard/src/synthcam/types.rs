//! Domain types for synthetic gaze sessions.
//!
//! Coordinate frame: the screen lies in the plane z = 0 with x to the
//! subject's screen-right and y up; the subject sits at z > 0 looking toward
//! decreasing z. Angles are radians; positive yaw looks screen-right,
//! positive pitch looks up.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const IMG_WIDTH: usize = 60;
pub const IMG_HEIGHT: usize = 36;
pub const IMG_PIXELS: usize = IMG_WIDTH * IMG_HEIGHT;

/// Half the interpupillary distance, meters.
pub const EYE_OFFSET_M: f64 = 0.032;

const HALF_PI: f64 = std::f64::consts::FRAC_PI_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeAngles {
    pub yaw: f64,
    pub pitch: f64,
}

impl GazeAngles {
    pub fn new(yaw: f64, pitch: f64) -> Result<Self> {
        let a = GazeAngles { yaw, pitch };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.yaw.is_finite() && self.pitch.is_finite())
            || self.yaw.abs() >= HALF_PI
            || self.pitch.abs() >= HALF_PI
        {
            return Err(Error::Argument(format!(
                "gaze angles out of range (|yaw|, |pitch| < pi/2): ({}, {})",
                self.yaw, self.pitch
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadPose {
    pub yaw: f64,
    pub pitch: f64,
}

impl HeadPose {
    pub fn new(yaw: f64, pitch: f64) -> Result<Self> {
        let h = HeadPose { yaw, pitch };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.yaw.is_finite() && self.pitch.is_finite())
            || self.yaw.abs() >= HALF_PI
            || self.pitch.abs() >= HALF_PI
        {
            return Err(Error::Argument(format!(
                "head pose out of range (|yaw|, |pitch| < pi/2): ({}, {})",
                self.yaw, self.pitch
            )));
        }
        Ok(())
    }
}

/// 60x36 grayscale eye image with its recorded gaze/head labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EyeImage {
    /// Row-major, 36 rows x 60 columns, every value in [0, 1].
    pub pixels: Vec<f64>,
    pub gaze: GazeAngles,
    pub head: HeadPose,
}

impl EyeImage {
    pub fn new(pixels: Vec<f64>, gaze: GazeAngles, head: HeadPose) -> Result<Self> {
        if pixels.len() != IMG_PIXELS {
            return Err(Error::Structure(format!(
                "eye image must be {}x{} = {} pixels, got {}",
                IMG_WIDTH,
                IMG_HEIGHT,
                IMG_PIXELS,
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Data("eye image pixel outside [0, 1]".into()));
        }
        Ok(EyeImage { pixels, gaze, head })
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * IMG_WIDTH + col]
    }
}

/// The 7-value feature record plus its binary state label
/// (0 = abnormal / off-screen, 1 = normal / on-screen).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureRecord {
    pub left_eye: GazeAngles,
    pub right_eye: GazeAngles,
    pub head: HeadPose,
    pub distance_m: f64,
    pub label: u8,
}

impl FeatureRecord {
    pub fn validate(&self) -> Result<()> {
        self.left_eye.validate()?;
        self.right_eye.validate()?;
        self.head.validate()?;
        if !(self.distance_m > 0.0) {
            return Err(Error::Data(format!(
                "distance must be positive, got {}",
                self.distance_m
            )));
        }
        if self.label > 1 {
            return Err(Error::Data(format!(
                "label must be 0 or 1, got {}",
                self.label
            )));
        }
        Ok(())
    }

    /// The 7 numeric features in CSV column order.
    pub fn features(&self) -> [f64; 7] {
        [
            self.left_eye.yaw,
            self.left_eye.pitch,
            self.right_eye.yaw,
            self.right_eye.pitch,
            self.head.yaw,
            self.head.pitch,
            self.distance_m,
        ]
    }
}

/// Where a gaze ray meets the screen plane, or a sentinel when it points away.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScreenHit {
    /// Meters in the screen plane; origin at screen center, x right, y up.
    Hit { x_m: f64, y_m: f64 },
    /// Ray does not reach the plane.
    Away,
}

fn default_screen_width() -> f64 {
    0.52
}
fn default_screen_height() -> f64 {
    0.32
}
fn default_margin() -> f64 {
    0.02
}
fn default_distance_range() -> [f64; 2] {
    [0.45, 0.75]
}
fn default_angle_range() -> [f64; 2] {
    [-0.6, 0.6]
}
fn default_label_noise() -> f64 {
    2.0
}
fn default_seed() -> u64 {
    42
}

/// Fully determines a generated dataset (geometry, noise, seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    #[serde(default = "default_screen_width")]
    pub screen_width_m: f64,
    #[serde(default = "default_screen_height")]
    pub screen_height_m: f64,
    /// Inset/outset of the normal region around the screen rectangle.
    #[serde(default = "default_margin")]
    pub margin_m: f64,
    #[serde(default = "default_distance_range")]
    pub distance_range_m: [f64; 2],
    #[serde(default = "default_angle_range")]
    pub yaw_range_rad: [f64; 2],
    #[serde(default = "default_angle_range")]
    pub pitch_range_rad: [f64; 2],
    /// Gaussian jitter (degrees) added to recorded angles, never to labels.
    #[serde(default = "default_label_noise")]
    pub label_noise_deg: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            screen_width_m: default_screen_width(),
            screen_height_m: default_screen_height(),
            margin_m: default_margin(),
            distance_range_m: default_distance_range(),
            yaw_range_rad: default_angle_range(),
            pitch_range_rad: default_angle_range(),
            label_noise_deg: default_label_noise(),
            seed: default_seed(),
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::Config(msg));
        if !(self.screen_width_m > 0.0 && self.screen_height_m > 0.0) {
            return err("screen dimensions must be positive".into());
        }
        if !(self.distance_range_m[0] > 0.0 && self.distance_range_m[0] <= self.distance_range_m[1])
        {
            return err(format!(
                "distance range must satisfy 0 < min <= max, got {:?}",
                self.distance_range_m
            ));
        }
        for (name, range) in [
            ("yaw_range_rad", self.yaw_range_rad),
            ("pitch_range_rad", self.pitch_range_rad),
        ] {
            if !(range[0] <= range[1]) {
                return err(format!("{name} is empty: {range:?}"));
            }
            if range[0].abs() >= HALF_PI || range[1].abs() >= HALF_PI {
                return err(format!("{name} must stay within (-pi/2, pi/2): {range:?}"));
            }
        }
        if !(self.label_noise_deg >= 0.0 && self.margin_m.is_finite()) {
            return err("label_noise_deg must be nonnegative and margin finite".into());
        }
        Ok(())
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let cfg: SessionConfig = serde_json::from_str(json)
            .map_err(|e| Error::Config(format!("session config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angle_invariants_are_enforced() {
        assert!(GazeAngles::new(0.3, -0.2).is_ok());
        assert!(GazeAngles::new(HALF_PI, 0.0).is_err());
        assert!(GazeAngles::new(0.0, -2.0).is_err());
        assert!(HeadPose::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn eye_image_shape_and_range_are_enforced() {
        let g = GazeAngles {
            yaw: 0.0,
            pitch: 0.0,
        };
        let h = HeadPose {
            yaw: 0.0,
            pitch: 0.0,
        };
        assert!(EyeImage::new(vec![0.5; IMG_PIXELS], g, h).is_ok());
        assert!(EyeImage::new(vec![0.5; 100], g, h).is_err());
        let mut bad = vec![0.5; IMG_PIXELS];
        bad[7] = 1.5;
        assert!(EyeImage::new(bad, g, h).is_err());
    }

    #[test]
    fn session_config_rejects_unknown_keys() {
        let err = SessionConfig::from_json(r#"{"seed": 3, "wat": 1}"#).unwrap_err();
        assert!(err.to_string().contains("wat"));
    }

    #[test]
    fn session_config_defaults_are_valid() {
        SessionConfig::default().validate().unwrap();
        let cfg = SessionConfig::from_json(r#"{"seed": 7}"#).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.screen_width_m, 0.52);
    }

    #[test]
    fn session_config_invariants() {
        let mut cfg = SessionConfig::default();
        cfg.distance_range_m = [0.8, 0.4];
        assert!(cfg.validate().is_err());
        let mut cfg = SessionConfig::default();
        cfg.yaw_range_rad = [1.6, 1.7];
        assert!(cfg.validate().is_err());
        let mut cfg = SessionConfig::default();
        cfg.screen_width_m = 0.0;
        assert!(cfg.validate().is_err());
    }
}
