//! Deterministic synthetic gaze sessions: eye images, head poses, gaze
//! angles, and normal/abnormal labels, plus their on-disk formats.

pub mod dataset;
pub mod formats;
pub mod geometry;
pub mod render;
pub mod types;

pub use dataset::{
    generate_feature_dataset, generate_image_dataset, generate_session, recompute_label,
    sample_frame_at, Frame, SessionFrame,
};
pub use geometry::{gaze_to_vector, intersect_screen, label_sample, vector_to_gaze};
pub use render::render_eye_image;
pub use types::{
    EyeImage, FeatureRecord, GazeAngles, HeadPose, ScreenHit, SessionConfig, EYE_OFFSET_M,
    IMG_HEIGHT, IMG_PIXELS, IMG_WIDTH,
};
