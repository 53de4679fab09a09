//! Generative fractional scattering networks: fractional wavelet scattering
//! embeddings, linear reduction, and convolutional decoders that invert them.

pub mod decoder;
pub mod error;
pub mod fft;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod filters;
pub mod frst;
pub mod imageio;
pub mod ingest;
pub mod reduction;
pub mod rng;
pub mod scattering;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{AnyTensor, DType, DenseTensor};
