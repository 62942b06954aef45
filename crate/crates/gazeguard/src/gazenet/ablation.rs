//! Paired baseline/pretrained comparison: for each architecture, train a
//! gaze model from random init (baseline) and from a frozen contrastively
//! pretrained backbone (pretrained), then compare mean angular errors
//! averaged over seeds.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::evaluate_gaze;
use super::model::{build_backbone, Arch, GazeModel};
use super::train::{finetune, split_train_eval, GazeTrainConfig};
use crate::error::{Error, Result};
use crate::pretext::{pretrain, projection_head, PretextConfig};
use crate::synthcam::{generate_image_dataset, SessionConfig};
use crate::util::derive_seed3;

fn default_archs() -> Vec<Arch> {
    vec![Arch::Lenet5ish, Arch::Tinyconv]
}
fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3]
}
fn default_image_count() -> usize {
    2000
}
fn default_epochs_baseline() -> u32 {
    15
}
fn default_epochs_pretrained() -> u32 {
    400
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationConfig {
    #[serde(default = "default_archs")]
    pub archs: Vec<Arch>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_image_count")]
    pub image_count: usize,
    /// Full-network epochs for the random-init baseline.
    #[serde(default = "default_epochs_baseline")]
    pub epochs_baseline: u32,
    /// Head-only epochs for the frozen pretrained variant (cheap on cached
    /// features, so it affords a long schedule).
    #[serde(default = "default_epochs_pretrained")]
    pub epochs_pretrained: u32,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            archs: default_archs(),
            seeds: default_seeds(),
            image_count: default_image_count(),
            epochs_baseline: default_epochs_baseline(),
            epochs_pretrained: default_epochs_pretrained(),
        }
    }
}

impl AblationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.archs.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config(
                "ablation needs >= 1 arch and >= 1 seed".into(),
            ));
        }
        if self.image_count < 10 {
            return Err(Error::Config("ablation image_count too small".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub arch: String,
    pub variant: String,
    pub seed: u64,
    pub mean_angular_error_deg: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ArchSummary {
    pub arch: String,
    pub baseline_mean_deg: f64,
    pub pretrained_mean_deg: f64,
    pub delta_deg: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    pub summary: Vec<ArchSummary>,
}

impl AblationReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("arch,variant,seed,mean_angular_error_deg\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                r.arch, r.variant, r.seed, r.mean_angular_error_deg
            );
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<12} {:>14} {:>14} {:>10}",
            "arch", "baseline", "pretrained", "delta"
        );
        for s in &self.summary {
            let _ = writeln!(
                out,
                "{:<12} {:>14.3} {:>14.3} {:>10.3}",
                s.arch, s.baseline_mean_deg, s.pretrained_mean_deg, s.delta_deg
            );
        }
        out
    }
}

const TAG_ABLATION: u64 = 0x41;

/// Runs the full paired comparison. The pretext backbone is trained once per
/// architecture and shared across seeds; each seed draws fresh head/baseline
/// initializations and shuffling streams.
pub fn run_ablation(
    session: &SessionConfig,
    pretext_cfg: &PretextConfig,
    gaze_cfg: &GazeTrainConfig,
    cfg: &AblationConfig,
) -> Result<AblationReport> {
    cfg.validate()?;
    let images = generate_image_dataset(session, cfg.image_count)?;
    let (train, eval) = split_train_eval(&images, gaze_cfg.eval_fraction, session.seed);
    let eval_refs: Vec<&crate::synthcam::EyeImage> = eval.iter().collect();
    if eval_refs.is_empty() {
        return Err(Error::Config(
            "eval split is empty; raise eval_fraction".into(),
        ));
    }

    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for &arch in &cfg.archs {
        let mut pretext = pretext_cfg.clone();
        pretext.seed = derive_seed3(pretext_cfg.seed, TAG_ABLATION, arch as u64, 0);
        let pretrained = pretrain(
            &train,
            build_backbone(arch, pretext.seed),
            projection_head(super::model::FEATURE_DIM, pretext.seed.wrapping_add(1)),
            &pretext,
        )?;

        let mut base_errs = Vec::new();
        let mut ours_errs = Vec::new();
        for &seed in &cfg.seeds {
            // baseline: random init, full network trains
            let mut baseline_cfg = gaze_cfg.clone();
            baseline_cfg.arch = arch;
            baseline_cfg.freeze_backbone = false;
            baseline_cfg.epochs = cfg.epochs_baseline;
            baseline_cfg.seed = derive_seed3(seed, TAG_ABLATION, arch as u64, 1);
            let mut baseline = GazeModel::new(arch, baseline_cfg.seed);
            finetune(&mut baseline, &train, &baseline_cfg)?;
            let base_eval = evaluate_gaze(
                &mut baseline,
                &eval_refs,
                &format!("{arch}-baseline-s{seed}"),
                "ablation-eval",
            )?;
            base_errs.push(base_eval.mean_angular_error_deg);
            rows.push(AblationRow {
                arch: arch.to_string(),
                variant: "baseline".into(),
                seed,
                mean_angular_error_deg: base_eval.mean_angular_error_deg,
            });

            // ours: frozen pretrained backbone, fresh head
            let mut ours_cfg = gaze_cfg.clone();
            ours_cfg.arch = arch;
            ours_cfg.freeze_backbone = true;
            ours_cfg.epochs = cfg.epochs_pretrained;
            ours_cfg.seed = derive_seed3(seed, TAG_ABLATION, arch as u64, 2);
            let mut ours = GazeModel::from_pretext(
                arch,
                pretrained.backbone.clone(),
                Some(format!("pretext-{arch}")),
                ours_cfg.seed,
            )?;
            finetune(&mut ours, &train, &ours_cfg)?;
            let ours_eval = evaluate_gaze(
                &mut ours,
                &eval_refs,
                &format!("{arch}-pretrained-s{seed}"),
                "ablation-eval",
            )?;
            ours_errs.push(ours_eval.mean_angular_error_deg);
            rows.push(AblationRow {
                arch: arch.to_string(),
                variant: "pretrained".into(),
                seed,
                mean_angular_error_deg: ours_eval.mean_angular_error_deg,
            });
        }

        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let baseline_mean = mean(&base_errs);
        let pretrained_mean = mean(&ours_errs);
        summary.push(ArchSummary {
            arch: arch.to_string(),
            baseline_mean_deg: baseline_mean,
            pretrained_mean_deg: pretrained_mean,
            delta_deg: pretrained_mean - baseline_mean,
        });
    }
    Ok(AblationReport { rows, summary })
}
