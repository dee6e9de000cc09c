pub mod error;
pub mod flow;
pub mod crf;
pub mod formats;
pub mod fusion;
pub mod image;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use image::{BinaryMask, MotionProbMap, ObjectnessMap, RgbImage, ScalarMap};
pub use scalar::Scalar;
pub use tensor::{Shape, Tensor};

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;

pub type MpNet32 = model::MpNetModel<f32>;
pub type MpNet64 = model::MpNetModel<f64>;
