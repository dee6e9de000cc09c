//! The encoder-decoder motion pattern network, its training loop and
//! weight serialization.

mod augment;
mod config;
mod network;
mod train;
mod weights;

pub use augment::{augment, TrainSample};
pub use config::{MpNetConfig, TrainConfig};
pub use network::{ConvBlock, ModelGrads, Mode, MpNetModel, StepOutput};
pub use train::{evaluate, threshold_prediction, train, EpochLog, TrainReport};
pub use weights::{load_weights, load_weights_any, read_weights_config, save_weights, WEIGHTS_MAGIC};
