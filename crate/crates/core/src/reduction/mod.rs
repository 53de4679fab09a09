//! Reducing scattering embeddings to decoder inputs.

mod fmf;
mod pca;

pub use fmf::{fmf, FmfConfig, Grouping};
pub use pca::{pca_fit, pca_load, pca_project, pca_project_batch, pca_save, PcaModel, WHITEN_FLOOR};
