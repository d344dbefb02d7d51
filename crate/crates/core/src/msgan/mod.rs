//! The grayscale-intermediate CycleGAN: U-Net generators `G: W → Y` and
//! `F: W → X`, spectrally normalized PatchGAN discriminators, the
//! four-term objective, the image buffer, threshold-gated discriminator
//! updates, the training loop, checkpoints and inference.
//!
//! Every input passes through the intermediate domain `W` (color jitter
//! followed by grayscale) before reaching a generator, so one trained model
//! accepts tiles of any staining.

mod buffer;
pub mod checkpoint;
mod config;
mod inference;
pub mod losses;
pub mod networks;
mod state;
mod train;

pub use buffer::ImageBuffer;
pub use checkpoint::Checkpoint;
pub use config::{DiscriminatorConfig, GeneratorConfig, TrainConfig};
pub use inference::{normalize_batch, normalize_inference, patchgan_forward, unet_forward, Direction};
pub use losses::LossParts;
pub use state::GanWeights;
pub use train::{
    discriminator_objective, generator_objective, jitter_seed, train_epoch, train_step, EpochReport, GanNets,
    ObjectiveVars, StepInputs, StepReport, TrainBatch,
};

use thiserror::Error;

use crate::imaging::ImageTile;
use crate::nn::{Real, Tensor};

#[derive(Debug, Error)]
pub enum MsganError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("epoch {epoch} outside the schedule of {total} epochs")]
    EpochOutOfRange { epoch: usize, total: usize },
    #[error("non-finite loss in {term} ({value})")]
    NonFiniteLoss { term: String, value: f64 },
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl MsganError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::ShapeMismatch(_) => "ShapeMismatch",
            Self::InvalidConfig(_) => "InvalidConfig",
            Self::EpochOutOfRange { .. } => "EpochOutOfRange",
            Self::NonFiniteLoss { .. } => "NonFiniteLoss",
            Self::Checkpoint(_) => "BadCheckpoint",
            Self::Io(_) => "IoError",
        }
    }
}

/// Learning rate of `epoch`: constant for the first `total − decay` epochs,
/// then `lr · (1 − (epoch − (total − decay) + 1) / (decay + 1))`.
pub fn lr_at_epoch(cfg: &TrainConfig, epoch: usize) -> Result<f64, MsganError> {
    if epoch >= cfg.total_epochs {
        return Err(MsganError::EpochOutOfRange { epoch, total: cfg.total_epochs });
    }
    let constant = cfg.total_epochs - cfg.decay_epochs.min(cfg.total_epochs);
    if epoch < constant {
        return Ok(cfg.learning_rate);
    }
    let into = (epoch - constant + 1) as f64;
    Ok(cfg.learning_rate * (1.0 - into / (cfg.decay_epochs as f64 + 1.0)))
}

/// Mixes integers into one well-spread seed (SplitMix64 finalizer per part).
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for p in parts {
        let mut z = (h ^ *p).wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

/// Stacks square tiles of side `size` into an `N×3×size×size` tensor.
pub fn tiles_to_tensor<T: Real>(tiles: &[ImageTile], size: usize) -> Result<Tensor<T>, MsganError> {
    let hw = size * size;
    let mut data = Vec::with_capacity(tiles.len() * 3 * hw);
    for t in tiles {
        if t.width() != size || t.height() != size {
            return Err(MsganError::ShapeMismatch(format!(
                "expected {size}x{size} tiles, got {}x{}",
                t.width(),
                t.height()
            )));
        }
        for c in 0..3 {
            data.extend(t.pixels().iter().skip(c).step_by(3).map(|v| T::lit(*v as f64)));
        }
    }
    Ok(Tensor::new(vec![tiles.len(), 3, size, size], data))
}

/// Inverse of [`tiles_to_tensor`]; metadata is copied from `like`.
pub fn tensor_to_tiles<T: Real>(t: &Tensor<T>, like: &[ImageTile]) -> Vec<ImageTile> {
    let (n, _, h, w) = t.dims4();
    let hw = h * w;
    (0..n)
        .map(|i| {
            let s = &t.data()[i * 3 * hw..(i + 1) * 3 * hw];
            let mut px = Vec::with_capacity(3 * hw);
            for p in 0..hw {
                for c in 0..3 {
                    px.push(s[c * hw + p].to_f32().unwrap_or(0.0));
                }
            }
            let mut tile = ImageTile::from_clamped(w, h, px).expect("non-empty tensor");
            if let Some(l) = like.get(i) {
                tile.meta = l.meta.clone();
            }
            tile
        })
        .collect()
}
