pub mod analysis;
pub mod checkpoint;
pub mod cli;
mod codec;
pub mod data;
pub mod distance;
pub mod error;
pub mod experiments;
pub mod gif;
pub mod model;
pub mod rng;
pub mod sampler;
pub mod tape;
pub mod tensor;
pub mod zoo;

pub use codec::write_atomic;
pub use error::{Error, Result};
pub use model::{Activation, ArchSpec, DiffModel, Layer, ParamGrads, Targets};
pub use rng::Rng;
pub use tensor::Tensor;
