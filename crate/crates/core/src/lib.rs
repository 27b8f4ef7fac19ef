pub mod awcc;
pub mod bench;
pub mod cli;
pub mod error;
pub mod image_io;
pub mod loss;
pub mod metrics;
pub mod mrdconv;
pub mod pipeline;
pub mod sgca;
pub mod tensor;
pub mod weights_file;

pub use error::{Error, FormatError, Result};
pub use pipeline::{enhance, ModelConfig, ModelWeights, Mode};
pub use tensor::Tensor;
