//! Fractional wavelet scattering.

mod cascade;
mod fractional;
mod paths;

pub use cascade::{scatter, scatter_batch, Embedding, Scatterer};
pub use fractional::{
    chirp, chirp_coordinate, chirp_values, frconv2, wavelet_modulus, FracOrderPair,
    FractionalConv,
};
pub use paths::{enumerate_paths, PathTable, ScatterPath};
