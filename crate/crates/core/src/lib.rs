//! Multi-domain stain normalization for H&E histopathology tiles.
//!
//! The crate provides the grayscale-intermediate CycleGAN normalizer
//! ([`msgan`]), the classical template-based baselines ([`stainsep`]),
//! evaluation metrics ([`metrics`]), whole-slide tiling ([`tiling`]) and the
//! command-line front end ([`cli`]).

pub mod cli;
pub mod imaging;
mod io_util;
pub mod metrics;
pub mod msgan;
pub mod nn;
pub mod stainsep;
pub mod synthetic;
pub mod tiling;
