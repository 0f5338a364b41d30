//! One-dimensional convolutional network mapping a normalized series to a Lyapunov spectrum.

mod file;
mod loss;
mod net;
mod params;
mod train;

pub use file::{decode_model, encode_model, load_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use loss::{huber_loss, HUBER_DELTA};
pub use net::{conv1d, forward, loss_and_grad, predict_batch, same_padding};
pub use params::{init_params, Architecture, ConvSpec, ModelParams};
pub use train::{
    adam_step, evaluate_loss, history_csv, train, train_data, AdamState, EpochRecord, TrainConfig, TrainData,
    TrainReport,
};
