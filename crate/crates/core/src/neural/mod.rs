//! Reverse-mode autodiff, the octave up/downsampling generator and critic,
//! WGAN-GP losses and the training loop.

mod checkpoint;
mod gradcheck;
mod graph;
mod kernels;
mod loss;
mod model;
mod tensor;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{check_gradients, GradCheck, GRADCHECK_FLOOR};
pub use graph::{Graph, Var};
pub use kernels::ConvGeom;
pub use loss::{noise_input, wgan_gp_losses, GanLossConfig, GanLosses};
pub use model::{
    default_channels, dense, discriminator, discriminator_block, generator, generator_block,
    minibatch_stddev, Bound, DiscBlockParams, GenBlockParams, ModelConfig, ParamSpec, Params,
    ShapeRow, ShapeTable, LEAKY_SLOPE, MAX_CHANNELS,
};
pub use tensor::{Shape, Tensor4};
pub use train::{
    batch_tonality, loss_csv, train, train_with_progress, Adam, StepStats, TrainConfig,
    TrainOutcome, Trainer, LOSS_CSV_HEADER,
};
