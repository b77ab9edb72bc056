//! Two-stream face-manipulation detection and localization.

pub mod error;
pub mod image_io;
pub mod locfuse;
pub mod losses;
pub mod maps;
pub mod maskgen;
pub mod metrics;
pub mod net;
pub mod nn;
pub mod residual;
pub mod resize;
pub mod scalar;
pub mod synthbench;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;

pub type Model32 = net::Model<f32>;
pub type Model64 = net::Model<f64>;
