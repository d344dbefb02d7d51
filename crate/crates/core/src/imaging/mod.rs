//! Image container, color-space conversions, jitter and the projection into
//! the grayscale intermediate domain.

mod color;
pub mod io;
mod jitter;
mod tile;

pub use color::{
    grayscale_identity, lab_to_rgb, luma, od_to_rgb, rgb_to_grayscale3, rgb_to_lab, rgb_to_od, Pixels3,
    DEFAULT_BACKGROUND_INTENSITY, LUMA,
};
pub(crate) use color::intensity_from_od;
pub use jitter::{augment_to_intermediate, color_jitter, JitterDraw, JitterParams};
pub use tile::{ImageTile, TileMeta};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("tile must have at least one pixel")]
    EmptyTile,
    #[error("pixel buffer has {actual} values, expected {expected}")]
    BufferSize { expected: usize, actual: usize },
    #[error("channel value {0} outside [0, 1]")]
    OutOfRange(f32),
    #[error("crop window exceeds the tile")]
    CropOutOfBounds,
    #[error("background intensity must be positive, got {0}")]
    BackgroundIntensity(f64),
    #[error("invalid jitter parameters: {0}")]
    InvalidJitter(&'static str),
    #[error("failed to decode {0}: {1}")]
    Decode(String, String),
    #[error("failed to encode {0}: {1}")]
    Encode(String, String),
}

impl ImagingError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::EmptyTile => "EmptyTile",
            Self::BufferSize { .. } => "BufferSize",
            Self::OutOfRange(_) => "OutOfRange",
            Self::CropOutOfBounds => "CropOutOfBounds",
            Self::BackgroundIntensity(_) => "BackgroundIntensity",
            Self::InvalidJitter(_) => "InvalidJitter",
            Self::Decode(..) => "DecodeError",
            Self::Encode(..) => "EncodeError",
        }
    }
}
