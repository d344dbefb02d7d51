//! 8-bit PNG I/O. Decoding maps byte `b` to `b / 255`; encoding rounds half
//! up and clamps.

use std::path::Path;

use super::{ImageTile, ImagingError};

pub fn decode_byte(b: u8) -> f32 {
    b as f32 / 255.0
}

pub fn encode_value(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) as f64 * 255.0 + 0.5).floor().min(255.0) as u8
}

/// The tile as interleaved 8-bit RGB.
pub fn to_rgb8(tile: &ImageTile) -> Vec<u8> {
    tile.pixels().iter().map(|v| encode_value(*v)).collect()
}

pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<ImageTile, ImagingError> {
    ImageTile::new(width, height, bytes.iter().map(|b| decode_byte(*b)).collect())
}

/// Reads any PNG, converting to RGB8 (alpha is dropped, gray is expanded).
pub fn read_png(path: &Path) -> Result<ImageTile, ImagingError> {
    let img = image::open(path).map_err(|e| ImagingError::Decode(path.display().to_string(), e.to_string()))?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    let mut tile = from_rgb8(w as usize, h as usize, rgb.as_raw())?;
    tile.meta.source_id = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    Ok(tile)
}

pub fn write_png(tile: &ImageTile, path: &Path) -> Result<(), ImagingError> {
    let buf = image::RgbImage::from_raw(tile.width() as u32, tile.height() as u32, to_rgb8(tile))
        .ok_or(ImagingError::BufferSize { expected: tile.pixel_count() * 3, actual: 0 })?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| ImagingError::Encode(path.display().to_string(), e.to_string()))
}
