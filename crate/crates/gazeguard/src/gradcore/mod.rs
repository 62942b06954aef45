//! Minimal differentiable sequential-model core: tensors, the layer
//! vocabulary, reverse-mode gradients, SGD/Adam, finite-difference
//! verification, and the binary checkpoint format.

pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod optim;
pub mod tensor;

pub use gradcheck::{check_loss_gradient, grad_check, GradCheckReport};
pub use graph::LayerGraph;
pub use layers::{ConcatAux, Conv2d, Dense, Flatten, Layer, MaxPool2d, Relu, Softmax};
pub use optim::{OptKind, Optimizer, Schedule};
pub use tensor::Tensor;
