//! Convolutional generators that invert reduced scattering embeddings.

mod adam;
mod checkpoint;
mod layers;
mod model;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use layers::{LayerSpec, Mode, BN_EPS, BN_MOMENTUM};
pub use model::{block_width, g1_build, g1_layers, g2_build, g2_layers, DecoderModel, RunningStats};
pub use train::{
    generate, l1_grad, l1_loss, to_signed, to_unit, train, write_curve_csv, CurvePoint, Split, TrainConfig,
    TrainOutcome,
};
