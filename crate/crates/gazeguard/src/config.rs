//! One JSON config per experiment: per-stage sections plus a global seed.
//! Unknown keys are rejected everywhere. The `GG_SEED` environment variable
//! overrides the global seed; effective stage seeds are derived from the
//! global seed and the stage's own seed field, so one file pins the whole
//! pipeline.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detector::DetectorConfig;
use crate::error::{Error, Result};
use crate::gazenet::{AblationConfig, GazeTrainConfig};
use crate::pretext::PretextConfig;
use crate::smoothing::KalmanConfig;
use crate::synthcam::SessionConfig;
use crate::util::derive_seed;

pub const SEED_ENV_VAR: &str = "GG_SEED";

fn default_seed() -> u64 {
    42
}

fn default_artifact_dir() -> std::path::PathBuf {
    std::path::PathBuf::from(".")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Base directory for relative output paths.
    #[serde(default = "default_artifact_dir")]
    pub artifact_dir: std::path::PathBuf,
    #[serde(default)]
    pub session: SessionConfig,
    #[serde(default)]
    pub pretext: PretextConfig,
    #[serde(default)]
    pub gaze: GazeTrainConfig,
    #[serde(default)]
    pub kalman: KalmanConfig,
    #[serde(default)]
    pub detector: DetectorConfig,
    #[serde(default)]
    pub ablation: AblationConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: default_seed(),
            artifact_dir: default_artifact_dir(),
            session: SessionConfig::default(),
            pretext: PretextConfig::default(),
            gaze: GazeTrainConfig::default(),
            kalman: KalmanConfig::default(),
            detector: DetectorConfig::default(),
            ablation: AblationConfig::default(),
        }
    }
}

const TAG_SESSION: u64 = 0x71;
const TAG_PRETEXT: u64 = 0x72;
const TAG_GAZE: u64 = 0x73;
const TAG_DETECTOR: u64 = 0x74;

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        Ok(cfg)
    }

    /// Loads, applies `GG_SEED` when set, derives stage seeds, validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Ok(v) = std::env::var(SEED_ENV_VAR) {
            cfg.seed = v.parse().map_err(|_| {
                Error::Config(format!(
                    "{SEED_ENV_VAR} must be an unsigned integer, got {v:?}"
                ))
            })?;
        }
        cfg.resolve_seeds();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Mixes the global seed into every stage; the per-stage seed fields act
    /// as offsets so stages stay independently reseedable from one file.
    pub fn resolve_seeds(&mut self) {
        self.session.seed = derive_seed(self.seed, TAG_SESSION, self.session.seed);
        self.pretext.seed = derive_seed(self.seed, TAG_PRETEXT, self.pretext.seed);
        self.gaze.seed = derive_seed(self.seed, TAG_GAZE, self.gaze.seed);
        self.detector.seed = derive_seed(self.seed, TAG_DETECTOR, self.detector.seed);
    }

    /// Resolves a command output path against the artifact directory.
    pub fn artifact_path(&self, out: &Path) -> std::path::PathBuf {
        if out.is_absolute() {
            out.to_path_buf()
        } else {
            self.artifact_dir.join(out)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.artifact_dir.as_os_str().is_empty() {
            return Err(Error::Config("artifact_dir must not be empty".into()));
        }
        self.session.validate()?;
        self.pretext.validate()?;
        self.gaze.validate()?;
        self.kalman.validate()?;
        self.detector.validate()?;
        self.ablation.validate()?;
        Ok(())
    }
}
