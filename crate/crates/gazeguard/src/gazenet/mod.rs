//! Downstream gaze regression: backbone architectures, the head-pose-fused
//! regression head, L2 training, angular-error evaluation, and the
//! baseline-vs-pretrained ablation harness.

pub mod ablation;
pub mod metrics;
pub mod model;
pub mod train;

pub use ablation::{run_ablation, AblationConfig, AblationReport};
pub use metrics::{angular_error_deg, evaluate_gaze, gaze_l2_loss, EvalReport};
pub use model::{build_backbone, build_gaze_head, Arch, GazeModel, GazeModelMeta, FEATURE_DIM};
pub use train::{finetune, split_train_eval, GazeTrainConfig};
