//! Seeded color jitter and the intermediate-domain projection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::color::{luma, rgb_to_grayscale3};
use super::tile::clamp01;
use super::{ImageTile, ImagingError};

/// Jitter strengths. A factor `f` draws a multiplier uniformly from
/// `[max(0, 1 - f), 1 + f]`; `hue` draws a shift from `[-hue, hue]` of a
/// full turn. All zeros is the identity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JitterParams {
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub hue: f64,
}

impl JitterParams {
    /// Saturation 0.75, brightness 0.75, contrast 0.5, no hue.
    pub fn training_default() -> Self {
        Self { brightness: 0.75, contrast: 0.5, saturation: 0.75, hue: 0.0 }
    }

    pub fn validate(&self) -> Result<(), ImagingError> {
        let ok = |f: f64| f.is_finite() && f >= 0.0;
        if !(ok(self.brightness) && ok(self.contrast) && ok(self.saturation)) {
            return Err(ImagingError::InvalidJitter("factors must be finite and non-negative"));
        }
        if !(0.0..=0.5).contains(&self.hue) {
            return Err(ImagingError::InvalidJitter("hue must lie in [0, 0.5]"));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.brightness == 0.0 && self.contrast == 0.0 && self.saturation == 0.0 && self.hue == 0.0
    }
}

/// The factors actually applied to one tile.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JitterDraw {
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub hue_shift: f64,
}

impl JitterDraw {
    /// Draws the four factors from a generator seeded with `seed`. Exactly four
    /// uniforms are consumed, in the order brightness, contrast, saturation,
    /// hue, regardless of which factors are zero.
    pub fn sample(params: &JitterParams, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut factor = |f: f64| {
            let u: f64 = rng.random();
            let lo = (1.0 - f).max(0.0);
            lo + (1.0 + f - lo) * u
        };
        let brightness = factor(params.brightness);
        let contrast = factor(params.contrast);
        let saturation = factor(params.saturation);
        let u: f64 = rng.random();
        let hue_shift = -params.hue + 2.0 * params.hue * u;
        Self { brightness, contrast, saturation, hue_shift }
    }
}

/// Brightness → contrast → saturation → hue, each followed by clamping.
/// Zero-strength steps are skipped, so zero parameters reproduce the input
/// bit for bit.
pub fn color_jitter(tile: &ImageTile, params: &JitterParams, seed: u64) -> Result<ImageTile, ImagingError> {
    params.validate()?;
    let draw = JitterDraw::sample(params, seed);
    Ok(apply_draw(tile, params, &draw))
}

pub(crate) fn apply_draw(tile: &ImageTile, params: &JitterParams, draw: &JitterDraw) -> ImageTile {
    let mut out = tile.clone();
    if params.brightness != 0.0 {
        let b = draw.brightness;
        out = out.map_pixels(|p| p.map(|c| (c as f64 * b) as f32));
    }
    if params.contrast != 0.0 {
        let n = out.pixel_count() as f64;
        let mean = out.iter_rgb().map(|p| luma(p) as f64).sum::<f64>() / n;
        let k = draw.contrast;
        out = out.map_pixels(|p| p.map(|c| blend(c as f64, mean, k)));
    }
    if params.saturation != 0.0 {
        let k = draw.saturation;
        out = out.map_pixels(|p| {
            let g = luma(p) as f64;
            p.map(|c| blend(c as f64, g, k))
        });
    }
    if params.hue != 0.0 {
        let shift = draw.hue_shift;
        out = out.map_pixels(|p| shift_hue(p, shift));
    }
    out
}

/// `k * value + (1 - k) * anchor`
fn blend(value: f64, anchor: f64, k: f64) -> f32 {
    clamp01((k * value + (1.0 - k) * anchor) as f32)
}

fn shift_hue(rgb: [f32; 3], shift: f64) -> [f32; 3] {
    let [r, g, b] = rgb.map(|c| c as f64);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    if delta == 0.0 {
        return rgb;
    }
    let s = delta / max;
    let mut h = if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    } / 6.0;
    h = (h + shift).rem_euclid(1.0);
    hsv_to_rgb(h, s, max)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f32; 3] {
    let h6 = h * 6.0;
    let sector = h6.floor();
    let f = h6 - sector;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    let (r, g, b) = match sector as i64 % 6 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [r as f32, g as f32, b as f32]
}

/// The projection into the intermediate domain: color jitter followed by
/// three-channel grayscale.
pub fn augment_to_intermediate(tile: &ImageTile, params: &JitterParams, seed: u64) -> Result<ImageTile, ImagingError> {
    Ok(rgb_to_grayscale3(&color_jitter(tile, params, seed)?))
}
