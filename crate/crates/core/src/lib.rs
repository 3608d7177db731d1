//! Masked-patch image compression: the transmitter drops a seeded random
//! subset of patches and codes the rest with a block codec; the receiver
//! decodes and fills the gaps with a transformer masked autoencoder.

pub mod autodiff;
pub mod codec;
pub mod error;
pub mod harness;
pub mod image;
pub mod masking;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod tensor;
pub mod tmae;
pub mod transformer;

pub use codec::{CodecId, CodecParams};
pub use error::{DecodeError, Error, Result, TensorError};
pub use image::Image;
pub use masking::{generate_mask, MaskSpec, PatchGrid};
pub use pipeline::{compress, decompress, Container, PipelineConfig};
pub use tensor::Tensor;
pub use tmae::{Tmae, TmaeConfig};
