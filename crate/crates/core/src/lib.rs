pub mod attribution;
pub mod data;
pub mod error;
pub mod features;
pub mod nn;
pub mod scalar;
pub mod seed;
pub mod stats;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use nn::{FusionModel, Model, ModelConfig};
