//! The baseline convolutional network, built from scratch: forward pass,
//! cross-entropy loss with full backpropagation, SGD-with-momentum
//! training, patch prediction, checkpointing and first-layer filter
//! export.
//!
//! Everything runs in f64 and is gradient-checked against central finite
//! differences; training trajectories are bitwise reproducible from the
//! seed.

mod arch;
mod checkpoint;
mod filters;
mod net;
mod train;

pub use arch::{CnnArchitecture, LayerSpec, Shape3};
pub use checkpoint::{decode as decode_checkpoint, encode as encode_checkpoint, load, save};
pub use filters::export_first_layer_filters;
pub use net::{
    argmax, forward, init_params, loss_and_grad, softmax, CnnParameters, ForwardCache, LayerParams,
};
pub use train::{
    predict_patch, train, train_with_progress, EpochMetrics, TrainConfig, EPOCH_METRICS_HEADER,
};
