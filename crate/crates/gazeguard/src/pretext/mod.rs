//! Self-supervised contrastive pretraining: augmentation pipeline, view-pair
//! construction, the contrastive loss, and the pretext training loop.

pub mod augment;
pub mod loss;
pub mod train;

pub use augment::{augment, make_views, rotate_nearest, AugmentationSpec, ColorJitterRange};
pub use loss::{cosine_sim, nt_xent_loss, ContrastiveBatch};
pub use train::{images_to_tensor, pretrain, projection_head, PretextConfig, PretrainResult};
