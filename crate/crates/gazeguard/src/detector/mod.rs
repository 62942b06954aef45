//! The abnormal-state classifier: feature-record construction, MLP training
//! with Adam, evaluation, and the debounced streaming inference machine.

pub mod eval;
pub mod infer;
pub mod loss;
pub mod records;
pub mod split;
pub mod train;

pub use eval::{detector_probs, evaluate_detector, evaluate_logits, DetectorMetrics};
pub use infer::{decisions_to_csv, infer_state, DebouncedStream, StateDecision};
pub use loss::{cross_entropy_loss, softmax_probs};
pub use records::build_records;
pub use split::{Split, SplitSpec};
pub use train::{
    build_mlp, train_detector, DetectorConfig, DetectorModel, DetectorTrainOutcome, FEATURE_COUNT,
};
