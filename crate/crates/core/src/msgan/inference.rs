use serde::{Deserialize, Serialize};

use super::config::{DiscriminatorConfig, GeneratorConfig};
use super::networks::{discriminator_forward, generator_forward};
use super::state::GanWeights;
use super::{tensor_to_tiles, tiles_to_tensor, MsganError};
use crate::imaging::{rgb_to_grayscale3, ImageTile};
use crate::nn::{Graph, ParamSet, Tensor};

/// Target domain of an inference pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Through `F`, toward domain X.
    ToX,
    /// Through `G`, toward domain Y.
    ToY,
}

/// Runs a generator on a batch of tiles of the configured size.
pub fn unet_forward(cfg: &GeneratorConfig, params: &ParamSet<f32>, tiles: &[ImageTile]) -> Result<Vec<ImageTile>, MsganError> {
    if tiles.is_empty() {
        return Ok(Vec::new());
    }
    let x = tiles_to_tensor::<f32>(tiles, cfg.input_size)?;
    let mut g = Graph::new();
    let bound = params.bind(&mut g, false);
    let xv = g.constant(x);
    let y = generator_forward(&mut g, cfg, &bound, xv);
    Ok(tensor_to_tiles(g.value(y), tiles))
}

/// Raw patch scores (`N×1×h×w`) of a discriminator for a batch of tiles.
pub fn patchgan_forward(
    cfg: &DiscriminatorConfig,
    params: &ParamSet<f32>,
    us: &[Vec<f32>],
    tiles: &[ImageTile],
) -> Result<Tensor<f32>, MsganError> {
    let size = tiles.first().map(ImageTile::width).ok_or_else(|| MsganError::ShapeMismatch("empty batch".into()))?;
    if cfg.score_size(size).is_none() {
        return Err(MsganError::ShapeMismatch(format!("{size}-pixel input is too small for the discriminator")));
    }
    let x = tiles_to_tensor::<f32>(tiles, size)?;
    let mut g = Graph::new();
    let bound = params.bind(&mut g, false);
    let xv = g.constant(x);
    let (s, _) = discriminator_forward(&mut g, cfg, &bound, us, xv);
    Ok(g.value(s).clone())
}

/// Normalizes tiles through the grayscale intermediate domain:
/// `F(H′(tile))` for [`Direction::ToX`], `G(H′(tile))` for [`Direction::ToY`].
/// No augmentation is applied, so the output depends only on the tile's gray
/// values.
pub fn normalize_batch(w: &GanWeights, tiles: &[ImageTile], direction: Direction) -> Result<Vec<ImageTile>, MsganError> {
    let gray: Vec<ImageTile> = tiles.iter().map(rgb_to_grayscale3).collect();
    let params = match direction {
        Direction::ToX => &w.f,
        Direction::ToY => &w.g,
    };
    unet_forward(&w.generator, params, &gray)
}

pub fn normalize_inference(w: &GanWeights, tile: &ImageTile, direction: Direction) -> Result<ImageTile, MsganError> {
    Ok(normalize_batch(w, std::slice::from_ref(tile), direction)?.remove(0))
}
