//! gazeguard: a desk-scale pipeline for detecting whether a subject is
//! looking at the screen. Synthetic eye-image sessions feed a contrastively
//! pretrained CNN gaze regressor; the regressed gaze stream is Kalman
//! smoothed and a small MLP classifies each frame's 7-value feature record
//! as normal (on-screen) or abnormal (off-screen).

pub mod cli;
pub mod config;
pub mod detector;
pub mod error;
pub mod gazenet;
pub mod gradcore;
pub mod pretext;
pub mod smoothing;
pub mod synthcam;
pub mod trace;
pub mod util;

pub use error::{Error, Result};
