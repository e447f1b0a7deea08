//! Small trainable network for simulated clients: dense and 1-D
//! convolution layers, max pooling, a softmax output, class-weighted
//! cross-entropy and plain SGD with optional frozen prefix and proximal
//! regularizer.

mod arch;
mod batch;
mod gradcheck;
mod layers;
mod train;

pub use arch::{Activation, Architecture, LayerKind, LayerSpec};
pub use batch::{Batch, Dataset, Matrix};
pub use gradcheck::{gradient_check, gradient_check_sampled};
pub use layers::{evaluate, forward, objective_and_gradient, Gradients};
pub use train::{
    balanced_class_weights, loss, train_local, TrainOutput, TrainingConfig, LOG_CLAMP,
};
