use serde::{Deserialize, Serialize};

use super::ImagingError;

/// Provenance carried alongside the pixels of a tile.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileMeta {
    /// Medical-center tag of the domain the tile belongs to.
    pub domain_label: Option<String>,
    pub source_id: Option<String>,
    /// Top-left pixel of the tile in its source image.
    pub origin_xy: Option<(u32, u32)>,
}

/// An RGB image with channel values in `[0, 1]`, stored row-major and
/// channel-interleaved (`HWC`).
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTile {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
    pub meta: TileMeta,
}

impl ImageTile {
    /// Builds a tile from interleaved RGB values. Every value must be finite
    /// and inside `[0, 1]`.
    pub fn new(width: usize, height: usize, pixels: Vec<f32>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::EmptyTile);
        }
        if pixels.len() != width * height * 3 {
            return Err(ImagingError::BufferSize {
                expected: width * height * 3,
                actual: pixels.len(),
            });
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(ImagingError::OutOfRange(*v));
        }
        Ok(Self { width, height, pixels, meta: TileMeta::default() })
    }

    /// Builds a tile from interleaved values, clamping each into `[0, 1]`.
    /// NaN maps to 0.
    pub fn from_clamped(width: usize, height: usize, mut pixels: Vec<f32>) -> Result<Self, ImagingError> {
        for v in &mut pixels {
            *v = clamp01(*v);
        }
        Self::new(width, height, pixels)
    }

    /// A tile filled with one color.
    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Result<Self, ImagingError> {
        let pixels = (0..width * height).flat_map(|_| rgb).collect();
        Self::from_clamped(width, height, pixels)
    }

    /// Builds a tile by evaluating `f(x, y)` for each pixel; results are clamped.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [f32; 3],
    ) -> Result<Self, ImagingError> {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        Self::from_clamped(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f32> {
        self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Iterates pixels in row-major order.
    pub fn iter_rgb(&self) -> impl Iterator<Item = [f32; 3]> + '_ {
        self.pixels.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    /// Replaces the pixel data and keeps the metadata. Values are clamped.
    pub fn with_pixels(&self, pixels: Vec<f32>) -> Result<Self, ImagingError> {
        let mut out = Self::from_clamped(self.width, self.height, pixels)?;
        out.meta = self.meta.clone();
        Ok(out)
    }

    /// Applies `f` to each pixel, clamps the results and keeps the metadata.
    pub fn map_pixels(&self, mut f: impl FnMut([f32; 3]) -> [f32; 3]) -> Self {
        let mut pixels = Vec::with_capacity(self.pixels.len());
        for p in self.iter_rgb() {
            pixels.extend(f(p).map(clamp01));
        }
        Self { width: self.width, height: self.height, pixels, meta: self.meta.clone() }
    }

    /// Copies a `w`×`h` window whose top-left corner is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self, ImagingError> {
        if x0 + w > self.width || y0 + h > self.height || w == 0 || h == 0 {
            return Err(ImagingError::CropOutOfBounds);
        }
        let mut pixels = Vec::with_capacity(w * h * 3);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * 3;
            pixels.extend_from_slice(&self.pixels[start..start + w * 3]);
        }
        Ok(Self { width: w, height: h, pixels, meta: self.meta.clone() })
    }

    /// Rotates the tile by 90° clockwise.
    pub fn rotate90(&self) -> Self {
        let (w, h) = (self.width, self.height);
        let mut pixels = vec![0.0; self.pixels.len()];
        for y in 0..h {
            for x in 0..w {
                let (nx, ny) = (h - 1 - y, x);
                let src = (y * w + x) * 3;
                let dst = (ny * h + nx) * 3;
                pixels[dst..dst + 3].copy_from_slice(&self.pixels[src..src + 3]);
            }
        }
        Self { width: h, height: w, pixels, meta: self.meta.clone() }
    }

    /// Whether all three channels are equal at every pixel.
    pub fn is_channel_equal(&self) -> bool {
        self.iter_rgb().all(|[r, g, b]| r == g && g == b)
    }

    /// Largest absolute per-channel difference to another tile of the same size.
    pub fn max_abs_diff(&self, other: &ImageTile) -> f32 {
        self.pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }

    /// Mean absolute per-channel difference to another tile of the same size.
    pub fn mean_abs_diff(&self, other: &ImageTile) -> f64 {
        let s: f64 = self.pixels.iter().zip(&other.pixels).map(|(a, b)| (a - b).abs() as f64).sum();
        s / self.pixels.len() as f64
    }
}

pub(crate) fn clamp01(v: f32) -> f32 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}
