//! Image-quality and domain-shift metrics: windowed SSIM between tile pairs
//! and the Fréchet distance between Gaussians fitted to encoder features of
//! two tile sets.

mod encoder;
mod fid;
mod ssim;

pub use encoder::{encode_features, Encoder, EncoderSpec};
pub use fid::{fid_between_sets, fit_gaussian, frechet_distance, FeatureGaussian, FidReport};
pub use ssim::{ssim, SSIM_WINDOW};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("images must be at least {window}x{window} pixels, got {width}x{height}")]
    WindowTooLarge { window: usize, width: usize, height: usize },
    #[error("need at least {required} samples, got {found}")]
    TooFewSamples { found: usize, required: usize },
    #[error("feature dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("bad encoder weights: {0}")]
    BadWeights(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl MetricsError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::ShapeMismatch(_) => "ShapeMismatch",
            Self::WindowTooLarge { .. } => "WindowTooLarge",
            Self::TooFewSamples { .. } => "TooFewSamples",
            Self::DimensionMismatch(..) => "DimensionMismatch",
            Self::NumericalFailure(_) => "NumericalFailure",
            Self::BadWeights(_) => "BadWeights",
            Self::Io(_) => "IoError",
        }
    }
}
