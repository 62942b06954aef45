//! Command surface tying the pipeline stages together. Every command is a
//! pure function of (config file, input files, seed); stages couple only
//! through files.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::detector::{
    build_records, decisions_to_csv, evaluate_detector, infer_state, train_detector, DetectorModel,
};
use crate::error::{Error, Result};
use crate::gazenet::FEATURE_DIM;
use crate::gazenet::{
    build_backbone, evaluate_gaze, finetune, run_ablation, split_train_eval, GazeModel,
};
use crate::gradcore::checkpoint;
use crate::pretext::{pretrain, projection_head};
use crate::synthcam::formats::{
    read_feature_csv, read_image_dataset, read_session, write_feature_csv, write_image_dataset,
    write_session,
};
use crate::synthcam::{generate_feature_dataset, generate_image_dataset, generate_session};
use crate::util::atomic_write;

#[derive(Debug, Parser)]
#[command(
    name = "gazeguard",
    about = "Synthetic gaze pipeline: dataset generation, contrastive pretraining, \
             gaze regression, Kalman smoothing, and on/off-screen state detection",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a dataset (images, feature records, or a session)
    Gen(GenArgs),
    /// Contrastive pretraining of the backbone
    Pretrain(StageArgs),
    /// Train the gaze regressor
    TrainGaze(TrainGazeArgs),
    /// Run a gaze model over a session and emit feature records
    BuildFeatures(BuildFeaturesArgs),
    /// Train the abnormal-state MLP
    TrainDetector(StageArgs),
    /// Paired baseline-vs-pretrained comparison
    Ablation(AblationArgs),
    /// Evaluate a gaze model or a detector on a dataset
    Eval(EvalArgs),
    /// Replay a session offline through gaze -> smoothing -> detector
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Eye-image dataset (PGM files + index CSV)
    #[arg(long, conflicts_with_all = ["features", "session"])]
    pub images: bool,
    /// 7-value feature records (CSV)
    #[arg(long, conflicts_with = "session")]
    pub features: bool,
    /// Session with per-eye images (index CSV + PGM files)
    #[arg(long)]
    pub session: bool,
    #[arg(short = 'n', long, default_value_t = 1000)]
    pub count: usize,
    #[arg(short = 'o', long)]
    pub out: PathBuf,
    /// Disable the 50/50 class-balanced sampler (feature datasets only)
    #[arg(long)]
    pub unbalanced: bool,
}

#[derive(Debug, Args)]
pub struct StageArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Input dataset (image index CSV for pretrain, feature CSV for
    /// train-detector)
    #[arg(long)]
    pub data: PathBuf,
    #[arg(short = 'o', long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainGazeArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Image index CSV
    #[arg(long)]
    pub data: PathBuf,
    #[arg(short = 'o', long)]
    pub out: PathBuf,
    /// Initialize the backbone from a pretext checkpoint; omitting this
    /// trains the random-init baseline
    #[arg(long)]
    pub from_pretext: Option<PathBuf>,
    /// Freeze the backbone (overrides the config)
    #[arg(long, conflicts_with = "no_freeze")]
    pub freeze: bool,
    /// Train the whole network (overrides the config)
    #[arg(long)]
    pub no_freeze: bool,
}

#[derive(Debug, Args)]
pub struct BuildFeaturesArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub gaze_ckpt: PathBuf,
    /// Session index CSV
    #[arg(long)]
    pub session: PathBuf,
    #[arg(short = 'o', long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblationArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory for ablation.csv and ablation.txt
    #[arg(short = 'o', long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, conflicts_with = "detector_ckpt")]
    pub gaze_ckpt: Option<PathBuf>,
    #[arg(long)]
    pub detector_ckpt: Option<PathBuf>,
    /// Image index CSV (gaze) or feature CSV (detector)
    #[arg(long)]
    pub data: PathBuf,
    #[arg(short = 'o', long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub gaze_ckpt: PathBuf,
    #[arg(long)]
    pub detector_ckpt: PathBuf,
    /// Session index CSV
    #[arg(long)]
    pub session: PathBuf,
    /// Timeline CSV output; a .summary.json lands next to it
    #[arg(short = 'o', long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Pretrain(args) => cmd_pretrain(args),
        Command::TrainGaze(args) => cmd_train_gaze(args),
        Command::BuildFeatures(args) => cmd_build_features(args),
        Command::TrainDetector(args) => cmd_train_detector(args),
        Command::Ablation(args) => cmd_ablation(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Replay(args) => cmd_replay(args),
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(suffix);
    PathBuf::from(p)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Data(format!("json serialization: {e}")))?;
    atomic_write(path, text.as_bytes())
}

fn label_balance(labels: impl Iterator<Item = u8>) -> (usize, usize) {
    let mut normal = 0;
    let mut abnormal = 0;
    for l in labels {
        if l == 1 {
            normal += 1;
        } else {
            abnormal += 1;
        }
    }
    (normal, abnormal)
}

pub fn cmd_gen(args: GenArgs) -> Result<()> {
    let cfg = PipelineConfig::load(&args.config)?;
    let out = cfg.artifact_path(&args.out);
    if args.count == 0 {
        return Err(Error::Argument("-n must be positive".into()));
    }
    let kinds = [args.images, args.features, args.session];
    if kinds.iter().filter(|&&k| k).count() != 1 {
        return Err(Error::Argument(
            "choose exactly one of --images, --features, --session".into(),
        ));
    }
    if args.images {
        let images = generate_image_dataset(&cfg.session, args.count)?;
        write_image_dataset(&out, &images)?;
        println!(
            "wrote {} images to {} (index + PGM files)",
            images.len(),
            out.display()
        );
    } else if args.features {
        let records = generate_feature_dataset(&cfg.session, args.count, !args.unbalanced)?;
        write_feature_csv(&out, &records)?;
        let (normal, abnormal) = label_balance(records.iter().map(|r| r.label));
        println!(
            "wrote {} records to {} (normal {}, abnormal {})",
            records.len(),
            out.display(),
            normal,
            abnormal
        );
    } else {
        let frames = generate_session(&cfg.session, args.count)?;
        write_session(&out, &frames)?;
        let (normal, abnormal) = label_balance(frames.iter().map(|f| f.label));
        println!(
            "wrote {} session frames to {} (normal {}, abnormal {})",
            frames.len(),
            out.display(),
            normal,
            abnormal
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct PretrainMetrics {
    epochs: u32,
    first_epoch_loss: f64,
    final_epoch_loss: f64,
}

pub fn cmd_pretrain(args: StageArgs) -> Result<()> {
    let cfg = PipelineConfig::load(&args.config)?;
    let images = read_image_dataset(&cfg.artifact_path(&args.data))?;
    let backbone = build_backbone(cfg.gaze.arch, cfg.pretext.seed);
    let projection = projection_head(FEATURE_DIM, cfg.pretext.seed.wrapping_add(1));
    let result = pretrain(&images, backbone, projection, &cfg.pretext)?;
    let out = cfg.artifact_path(&args.out);
    checkpoint::save(&result.backbone, &out)?;
    result.trace.write_csv(&sibling(&out, ".trace.csv"))?;
    write_json(
        &sibling(&out, ".metrics.json"),
        &PretrainMetrics {
            epochs: cfg.pretext.epochs,
            first_epoch_loss: result.trace.first().unwrap_or(f64::NAN),
            final_epoch_loss: result.trace.last().unwrap_or(f64::NAN),
        },
    )?;
    println!(
        "pretrained {} backbone on {} images: loss {:.4} -> {:.4}; checkpoint {}",
        cfg.gaze.arch,
        images.len(),
        result.trace.first().unwrap_or(f64::NAN),
        result.trace.last().unwrap_or(f64::NAN),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct GazeTrainMetrics {
    arch: String,
    frozen: bool,
    train_count: usize,
    eval_count: usize,
    first_epoch_loss: f64,
    final_epoch_loss: f64,
    eval_mean_angular_error_deg: f64,
}

pub fn cmd_train_gaze(args: TrainGazeArgs) -> Result<()> {
    let cfg = PipelineConfig::load(&args.config)?;
    let mut gaze_cfg = cfg.gaze.clone();
    if args.freeze {
        gaze_cfg.freeze_backbone = true;
    } else if args.no_freeze {
        gaze_cfg.freeze_backbone = false;
    }

    let images = read_image_dataset(&cfg.artifact_path(&args.data))?;
    let (train, eval) = split_train_eval(&images, gaze_cfg.eval_fraction, cfg.session.seed);
    let mut model = match &args.from_pretext {
        Some(raw_path) => {
            let ckpt_path = &cfg.artifact_path(raw_path);
            let backbone = checkpoint::load(ckpt_path)?;
            // content-based id so reruns stay byte-identical
            let bytes = std::fs::read(ckpt_path).map_err(|e| Error::io(ckpt_path, e))?;
            let id = format!("crc32:{:08x}", crc32fast::hash(&bytes));
            GazeModel::from_pretext(gaze_cfg.arch, backbone, Some(id), gaze_cfg.seed)?
        }
        None => GazeModel::new(gaze_cfg.arch, gaze_cfg.seed),
    };

    let trace = finetune(&mut model, &train, &gaze_cfg)?;
    let out = cfg.artifact_path(&args.out);
    model.save(&out)?;
    trace.write_csv(&sibling(&out, ".trace.csv"))?;

    let eval_refs: Vec<&crate::synthcam::EyeImage> = eval.iter().collect();
    let eval_mean = if eval_refs.is_empty() {
        f64::NAN
    } else {
        evaluate_gaze(&mut model, &eval_refs, "train-gaze", "heldout")?.mean_angular_error_deg
    };
    write_json(
        &sibling(&out, ".metrics.json"),
        &GazeTrainMetrics {
            arch: gaze_cfg.arch.to_string(),
            frozen: gaze_cfg.freeze_backbone,
            train_count: train.len(),
            eval_count: eval.len(),
            first_epoch_loss: trace.first().unwrap_or(f64::NAN),
            final_epoch_loss: trace.last().unwrap_or(f64::NAN),
            eval_mean_angular_error_deg: eval_mean,
        },
    )?;
    println!(
        "trained {} ({}) on {} images: loss {:.4} -> {:.4}, held-out error {:.3} deg; {}",
        gaze_cfg.arch,
        if gaze_cfg.freeze_backbone {
            "frozen backbone"
        } else {
            "full network"
        },
        train.len(),
        trace.first().unwrap_or(f64::NAN),
        trace.last().unwrap_or(f64::NAN),
        eval_mean,
        out.display()
    );
    Ok(())
}

pub fn cmd_build_features(args: BuildFeaturesArgs) -> Result<()> {
    let cfg = PipelineConfig::load(&args.config)?;
    let mut model = GazeModel::load(&cfg.artifact_path(&args.gaze_ckpt))?;
    let session = read_session(&cfg.artifact_path(&args.session))?;
    let records = build_records(&mut model, &cfg.kalman, &session)?;
    write_feature_csv(&cfg.artifact_path(&args.out), &records)?;
    let (normal, abnormal) = label_balance(records.iter().map(|r| r.label));
    println!(
        "built {} records from {} (normal {}, abnormal {}); smoothing {}",
        records.len(),
        args.session.display(),
        normal,
        abnormal,
        if cfg.kalman.enabled { "on" } else { "off" }
    );
    Ok(())
}

pub fn cmd_train_detector(args: StageArgs) -> Result<()> {
    let cfg = PipelineConfig::load(&args.config)?;
    let records = read_feature_csv(&cfg.artifact_path(&args.data))?;
    let (model, outcome) = train_detector(&records, &cfg.detector)?;
    let out = cfg.artifact_path(&args.out);
    model.save(&out)?;
    outcome
        .train_trace
        .write_csv(&sibling(&out, ".trace.csv"))?;
    write_json(&sibling(&out, ".metrics.json"), &outcome)?;
    println!(
        "trained detector (depth {}) on {} records: test accuracy {:.4}; {}",
        cfg.detector.depth,
        records.len(),
        outcome.test.accuracy,
        out.display()
    );
    Ok(())
}

pub fn cmd_ablation(args: AblationArgs) -> Result<()> {
    let cfg = PipelineConfig::load(&args.config)?;
    let report = run_ablation(&cfg.session, &cfg.pretext, &cfg.gaze, &cfg.ablation)?;
    let out = cfg.artifact_path(&args.out);
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    atomic_write(&out.join("ablation.csv"), report.to_csv().as_bytes())?;
    atomic_write(&out.join("ablation.txt"), report.to_table().as_bytes())?;
    print!("{}", report.to_table());
    Ok(())
}

pub fn cmd_eval(args: EvalArgs) -> Result<()> {
    let cfg = PipelineConfig::load(&args.config)?;
    let out = cfg.artifact_path(&args.out);
    match (&args.gaze_ckpt, &args.detector_ckpt) {
        (Some(gaze_path), None) => {
            let mut model = GazeModel::load(&cfg.artifact_path(gaze_path))?;
            let images = read_image_dataset(&cfg.artifact_path(&args.data))?;
            let refs: Vec<&crate::synthcam::EyeImage> = images.iter().collect();
            let report = evaluate_gaze(
                &mut model,
                &refs,
                &gaze_path.display().to_string(),
                &args.data.display().to_string(),
            )?;
            write_json(&out, &report)?;
            println!(
                "gaze eval over {} images: mean angular error {:.3} deg; {}",
                refs.len(),
                report.mean_angular_error_deg,
                out.display()
            );
        }
        (None, Some(det_path)) => {
            let mut model = DetectorModel::load(&cfg.artifact_path(det_path))?;
            let records = read_feature_csv(&cfg.artifact_path(&args.data))?;
            let metrics = evaluate_detector(&mut model, &records)?;
            write_json(&out, &metrics)?;
            println!(
                "detector eval over {} records: accuracy {:.4}; {}",
                records.len(),
                metrics.accuracy,
                out.display()
            );
        }
        _ => {
            return Err(Error::Argument(
                "pass exactly one of --gaze-ckpt or --detector-ckpt".into(),
            ))
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct ReplaySummary {
    frames: usize,
    fraction_abnormal: f64,
    stable_transitions: usize,
    accuracy_vs_truth: f64,
}

pub fn cmd_replay(args: ReplayArgs) -> Result<()> {
    let cfg = PipelineConfig::load(&args.config)?;
    let mut gaze = GazeModel::load(&cfg.artifact_path(&args.gaze_ckpt))?;
    let mut detector = DetectorModel::load(&cfg.artifact_path(&args.detector_ckpt))?;
    let session = read_session(&cfg.artifact_path(&args.session))?;
    let records = build_records(&mut gaze, &cfg.kalman, &session)?;
    let decisions = infer_state(&mut detector, &records, cfg.detector.debounce_k)?;
    let out = cfg.artifact_path(&args.out);
    atomic_write(&out, decisions_to_csv(&decisions).as_bytes())?;

    let abnormal = decisions.iter().filter(|d| d.label == 0).count();
    let transitions = decisions
        .windows(2)
        .filter(|w| w[0].stable != w[1].stable)
        .count();
    let correct = decisions
        .iter()
        .zip(&session)
        .filter(|(d, f)| d.label == f.label)
        .count();
    let summary = ReplaySummary {
        frames: decisions.len(),
        fraction_abnormal: abnormal as f64 / decisions.len() as f64,
        stable_transitions: transitions,
        accuracy_vs_truth: correct as f64 / decisions.len() as f64,
    };
    write_json(&sibling(&out, ".summary.json"), &summary)?;
    println!(
        "replayed {} frames: {:.1}% abnormal, {} stable transitions, {:.1}% agree with truth; {}",
        summary.frames,
        summary.fraction_abnormal * 100.0,
        summary.stable_transitions,
        summary.accuracy_vs_truth * 100.0,
        out.display()
    );
    Ok(())
}
