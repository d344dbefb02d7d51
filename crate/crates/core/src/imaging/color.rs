//! Grayscale, optical-density and lαβ conversions.

use std::sync::OnceLock;

use super::{ImageTile, ImagingError};

/// Luma weights of the grayscale conversion.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Default background (incident light) intensity for optical density.
pub const DEFAULT_BACKGROUND_INTENSITY: f64 = 240.0;

/// A per-pixel array of three reals, row-major, used for OD and lαβ images.
#[derive(Clone, Debug, PartialEq)]
pub struct Pixels3 {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[f64; 3]>,
}

impl Pixels3 {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

pub fn luma(rgb: [f32; 3]) -> f32 {
    (LUMA[0] * rgb[0] as f64 + LUMA[1] * rgb[1] as f64 + LUMA[2] * rgb[2] as f64) as f32
}

/// Three-channel grayscale: every channel is replaced by the pixel's luma.
pub fn rgb_to_grayscale3(tile: &ImageTile) -> ImageTile {
    tile.map_pixels(|p| {
        let l = luma(p);
        [l, l, l]
    })
}

/// Unaugmented grayscale projection used as the reconstruction target input.
/// Same map as [`rgb_to_grayscale3`].
pub fn grayscale_identity(tile: &ImageTile) -> ImageTile {
    rgb_to_grayscale3(tile)
}

/// Beer–Lambert optical density, `OD = -log10((I*255 + 1) / I0)`, floored at 0.
///
/// Pixels brighter than `(I0 - 1) / 255` have no absorbance and map to 0.
pub fn rgb_to_od(tile: &ImageTile, background_intensity: f64) -> Result<Pixels3, ImagingError> {
    if !(background_intensity > 0.0) {
        return Err(ImagingError::BackgroundIntensity(background_intensity));
    }
    let data = tile
        .iter_rgb()
        .map(|p| p.map(|c| od_value(c as f64, background_intensity)))
        .collect();
    Ok(Pixels3 { width: tile.width(), height: tile.height(), data })
}

pub(crate) fn od_value(intensity: f64, background: f64) -> f64 {
    (-((intensity * 255.0 + 1.0) / background).log10()).max(0.0)
}

pub(crate) fn intensity_from_od(od: f64, background: f64) -> f64 {
    ((background * 10f64.powf(-od) - 1.0) / 255.0).clamp(0.0, 1.0)
}

/// Inverse of [`rgb_to_od`], clamped to `[0, 1]`.
pub fn od_to_rgb(od: &Pixels3, background_intensity: f64) -> Result<ImageTile, ImagingError> {
    if !(background_intensity > 0.0) {
        return Err(ImagingError::BackgroundIntensity(background_intensity));
    }
    let pixels = od
        .data
        .iter()
        .flat_map(|p| p.map(|v| intensity_from_od(v, background_intensity) as f32))
        .collect();
    ImageTile::from_clamped(od.width, od.height, pixels)
}

const RGB_TO_LMS: [[f64; 3]; 3] = [
    [0.3811, 0.5783, 0.0402],
    [0.1967, 0.7244, 0.0782],
    [0.0241, 0.1288, 0.8444],
];

/// Exact inverse of [`RGB_TO_LMS`]; the commonly quoted four-digit inverse
/// does not round-trip to 1e-3.
fn lms_to_rgb() -> &'static [[f64; 3]; 3] {
    static INV: OnceLock<[[f64; 3]; 3]> = OnceLock::new();
    INV.get_or_init(|| invert3(&RGB_TO_LMS))
}

fn invert3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let c = |r: usize, k: usize| {
        let (r1, r2) = ((r + 1) % 3, (r + 2) % 3);
        let (k1, k2) = ((k + 1) % 3, (k + 2) % 3);
        m[r1][k1] * m[r2][k2] - m[r1][k2] * m[r2][k1]
    };
    let det = m[0][0] * c(0, 0) + m[0][1] * c(0, 1) + m[0][2] * c(0, 2);
    let mut inv = [[0.0; 3]; 3];
    for (r, row) in inv.iter_mut().enumerate() {
        for (k, v) in row.iter_mut().enumerate() {
            *v = c(k, r) / det;
        }
    }
    inv
}

/// Floor applied to LMS responses before the logarithm.
const LMS_FLOOR: f64 = 1e-6;

fn mat3(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

pub(crate) fn rgb_to_lab_pixel(rgb: [f64; 3]) -> [f64; 3] {
    let lms = mat3(&RGB_TO_LMS, rgb).map(|v| v.max(LMS_FLOOR).log10());
    let s3 = 3f64.sqrt();
    let s6 = 6f64.sqrt();
    let s2 = 2f64.sqrt();
    [
        (lms[0] + lms[1] + lms[2]) / s3,
        (lms[0] + lms[1] - 2.0 * lms[2]) / s6,
        (lms[0] - lms[1]) / s2,
    ]
}

pub(crate) fn lab_to_rgb_pixel(lab: [f64; 3]) -> [f64; 3] {
    let a = lab[0] / 3f64.sqrt();
    let b = lab[1] / 6f64.sqrt();
    let c = lab[2] / 2f64.sqrt();
    let log_lms = [a + b + c, a + b - c, a - 2.0 * b];
    let lms = log_lms.map(|v| 10f64.powf(v));
    mat3(lms_to_rgb(), lms)
}

/// Converts to Reinhard's lαβ space: log-LMS followed by the fixed
/// decorrelating transform.
pub fn rgb_to_lab(tile: &ImageTile) -> Pixels3 {
    let data = tile.iter_rgb().map(|p| rgb_to_lab_pixel(p.map(|c| c as f64))).collect();
    Pixels3 { width: tile.width(), height: tile.height(), data }
}

/// Converts lαβ back to RGB, clamping to `[0, 1]`.
pub fn lab_to_rgb(lab: &Pixels3) -> Result<ImageTile, ImagingError> {
    let pixels = lab
        .data
        .iter()
        .flat_map(|p| lab_to_rgb_pixel(*p).map(|c| c as f32))
        .collect();
    ImageTile::from_clamped(lab.width, lab.height, pixels)
}
