//! Template-based stain normalizers: Reinhard color transfer, Macenko SVD
//! stain separation and Vahadane sparse NMF stain separation.

mod macenko;
mod model;
mod reinhard;
pub mod solver;
mod vahadane;

pub use macenko::{macenko_apply, macenko_fit, stain_concentrations, Concentrations, MacenkoParams};
pub use model::{ModelDocument, NormalizerMethod, StainModel, TemplateStats, SCHEMA_VERSION};
pub use reinhard::{reinhard_apply, reinhard_fit, reinhard_transfer_lab, ReinhardTransfer};
pub use vahadane::{vahadane_apply, vahadane_concentrations, vahadane_fit, VahadaneFit, VahadaneParams};

use thiserror::Error;

use crate::imaging::ImagingError;

/// Minimum number of tissue pixels a stain fit needs.
pub const MIN_TISSUE_PIXELS: usize = 100;

#[derive(Debug, Error)]
pub enum StainError {
    #[error("template has a constant lαβ channel {channel} (std {std:e})")]
    DegenerateTemplate { channel: usize, std: f64 },
    #[error("only {found} tissue pixels above the OD threshold, need {required}")]
    InsufficientTissue { found: usize, required: usize },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("invalid stain model: {0}")]
    InvalidModel(String),
    #[error("model document: {0}")]
    Document(String),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

impl StainError {
    /// Stable machine-readable name.
    pub fn kind(&self) -> &'static str {
        match self {
            StainError::DegenerateTemplate { .. } => "DegenerateTemplate",
            StainError::InsufficientTissue { .. } => "InsufficientTissue",
            StainError::NumericalFailure(_) => "NumericalFailure",
            StainError::InvalidModel(_) => "InvalidModel",
            StainError::Document(_) => "BadModelDocument",
            StainError::Imaging(_) => "ImagingError",
        }
    }
}
