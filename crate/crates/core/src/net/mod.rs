//! The bottlenecked GIN classifier, its loss, exact gradients and training.

mod gradcheck;
mod loss;
mod model;
mod optim;
mod train;

pub use gradcheck::{gradient_check, numeric_gradients, TensorCheck};
pub use loss::{loss, LossBreakdown, LossWeights};
pub use model::{
    argmax, softmax, Batch, BatchOutput, BottleneckHead, GcbmModel, GcbmParams, GinLayerParams,
    ModelShape, NormStats, Prediction, SparseLinearClassifier,
};
pub use optim::{clip_global_norm, Adam, PlateauConfig, PlateauScheduler};
pub use train::{
    evaluate_loss, gradients, train, training_loss, EpochRecord, Example, PreparedBatch,
    TrainConfig, TrainOutcome,
};
