//! Deterministic synthetic H&E-like tiles rendered through Beer–Lambert from
//! known stain matrices. Used by the examples and the test suites, where the
//! ground-truth stains and concentrations are needed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::imaging::{intensity_from_od, ImageTile};
use crate::stainsep::solver::dot;
use crate::stainsep::StainModel;

/// A commonly used H&E reference (hematoxylin, eosin) with its 99th
/// percentile concentrations.
pub fn reference_stain_model() -> StainModel {
    StainModel::from_columns([0.5626, 0.7201, 0.4062], [0.2159, 0.8012, 0.5581], [1.9705, 1.0308], 240.0)
}

/// A random but physically plausible stain model: every OD component is at
/// least 0.2 before normalization and the two stains are at least 0.3 rad
/// apart.
pub fn random_stain_model(seed: u64) -> StainModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = reference_stain_model();
    loop {
        let mut perturb = |v: [f64; 3]| v.map(|x| (x + rng.random_range(-0.15..0.15)).max(0.2));
        let h = perturb(base.hematoxylin());
        let e = perturb(base.eosin());
        let model = StainModel::from_columns(h, e, [1.5, 1.0], 240.0);
        let cos = dot(model.hematoxylin(), model.eosin());
        if cos.acos() >= 0.3 {
            return model;
        }
    }
}

/// Renders per-pixel concentrations through a stain model (`I0` from the model).
pub fn render_concentrations(model: &StainModel, width: usize, height: usize, conc: &[[f64; 2]]) -> ImageTile {
    let (h, e) = (model.hematoxylin(), model.eosin());
    let i0 = model.background_intensity;
    let pixels = conc
        .iter()
        .flat_map(|c| (0..3).map(move |i| intensity_from_od(h[i] * c[0] + e[i] * c[1], i0) as f32))
        .collect();
    ImageTile::from_clamped(width, height, pixels).expect("valid dimensions")
}

/// Spatially unstructured mixture concentrations: about 10% background, 25%
/// pure hematoxylin, 25% pure eosin and 40% mixed pixels.
pub fn mixture_concentrations(width: usize, height: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..width * height)
        .map(|_| {
            let u: f64 = rng.random();
            if u < 0.10 {
                [0.0, 0.0]
            } else if u < 0.35 {
                [rng.random_range(1.0..1.8), 0.0]
            } else if u < 0.60 {
                [0.0, rng.random_range(1.0..1.8)]
            } else {
                [rng.random_range(0.2..1.0), rng.random_range(0.2..1.0)]
            }
        })
        .collect()
}

/// A tile whose pixels are independent stain mixtures under `model`.
pub fn stain_mixture_tile(model: &StainModel, width: usize, height: usize, seed: u64) -> ImageTile {
    render_concentrations(model, width, height, &mixture_concentrations(width, height, seed))
}

/// Concentration maps with tissue-like structure: a smooth eosin field with
/// background gaps and elliptical hematoxylin nuclei.
#[derive(Clone, Debug)]
pub struct TissueField {
    pub width: usize,
    pub height: usize,
    pub conc: Vec<[f64; 2]>,
}

fn value_noise(rng: &mut ChaCha8Rng, width: usize, height: usize, cell: usize) -> Vec<f64> {
    let gw = width / cell + 2;
    let gh = height / cell + 2;
    let grid: Vec<f64> = (0..gw * gh).map(|_| rng.random::<f64>()).collect();
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let fx = x as f64 / cell as f64;
            let fy = y as f64 / cell as f64;
            let (ix, iy) = (fx.floor() as usize, fy.floor() as usize);
            let (tx, ty) = (smooth(fx - ix as f64), smooth(fy - iy as f64));
            let g = |i: usize, j: usize| grid[j * gw + i];
            let top = g(ix, iy) * (1.0 - tx) + g(ix + 1, iy) * tx;
            let bottom = g(ix, iy + 1) * (1.0 - tx) + g(ix + 1, iy + 1) * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

impl TissueField {
    pub fn generate(width: usize, height: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coarse = value_noise(&mut rng, width, height, 16);
        let fine = value_noise(&mut rng, width, height, 4);
        let tissue_level: f64 = rng.random_range(0.15..0.35);
        let mut conc: Vec<[f64; 2]> = coarse
            .iter()
            .zip(&fine)
            .map(|(c, f)| {
                if *c < tissue_level {
                    [0.0, 0.0]
                } else {
                    let edge = ((c - tissue_level) / 0.08).min(1.0);
                    [0.06 * edge, edge * (0.25 + 0.45 * f + 0.2 * c)]
                }
            })
            .collect();

        let nuclei = (width * height) / 70;
        for _ in 0..nuclei {
            let cx = rng.random_range(0.0..width as f64);
            let cy = rng.random_range(0.0..height as f64);
            let rx: f64 = rng.random_range(1.5..3.5);
            let ry: f64 = rng.random_range(1.5..3.5);
            let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
            let strength = rng.random_range(0.55..1.1);
            let (s, c) = angle.sin_cos();
            let reach = rx.max(ry).ceil() as i64 + 1;
            for dy in -reach..=reach {
                for dx in -reach..=reach {
                    let px = cx as i64 + dx;
                    let py = cy as i64 + dy;
                    if px < 0 || py < 0 || px >= width as i64 || py >= height as i64 {
                        continue;
                    }
                    let ox = px as f64 + 0.5 - cx;
                    let oy = py as f64 + 0.5 - cy;
                    let u = (ox * c + oy * s) / rx;
                    let v = (-ox * s + oy * c) / ry;
                    let r2 = u * u + v * v;
                    if r2 < 1.0 {
                        let w = 1.0 - r2 * r2;
                        let p = &mut conc[py as usize * width + px as usize];
                        p[0] = p[0].max(strength * w);
                        p[1] *= 1.0 - 0.6 * w;
                    }
                }
            }
        }
        Self { width, height, conc }
    }

    /// Renders the field with a palette (per-stain intensity scaling applied
    /// to the concentrations).
    pub fn render(&self, palette: &Palette) -> ImageTile {
        let scaled: Vec<[f64; 2]> =
            self.conc.iter().map(|c| [c[0] * palette.intensity[0], c[1] * palette.intensity[1]]).collect();
        render_concentrations(&palette.stains, self.width, self.height, &scaled)
    }
}

/// A staining appearance: stain vectors plus a per-stain intensity factor.
#[derive(Clone, Debug)]
pub struct Palette {
    pub name: &'static str,
    pub stains: StainModel,
    pub intensity: [f64; 2],
}

impl Palette {
    fn new(name: &'static str, h: [f64; 3], e: [f64; 3], intensity: [f64; 2]) -> Self {
        Self { name, stains: StainModel::from_columns(h, e, [1.0, 1.0], 240.0), intensity }
    }

    /// Purple-pink, the target look.
    pub fn target() -> Self {
        Self::new("target", [0.56, 0.72, 0.41], [0.22, 0.80, 0.56], [1.0, 1.0])
    }

    /// Darker, blue-shifted staining.
    pub fn source() -> Self {
        Self::new("source", [0.70, 0.62, 0.36], [0.38, 0.80, 0.46], [1.25, 1.3])
    }

    /// A pale, red-shifted staining used as an unseen domain.
    pub fn unseen() -> Self {
        Self::new("unseen", [0.48, 0.78, 0.40], [0.10, 0.86, 0.50], [0.8, 0.75])
    }

    /// Renders `count` tiles of `size`×`size` with seeds `first_seed..`.
    pub fn tiles(&self, size: usize, count: usize, first_seed: u64) -> Vec<ImageTile> {
        (0..count as u64)
            .map(|i| {
                let mut t = TissueField::generate(size, size, first_seed + i).render(self);
                t.meta.domain_label = Some(self.name.to_string());
                t
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_models_are_valid() {
        for seed in 0..50 {
            let m = random_stain_model(seed);
            m.validate().unwrap();
            assert!(m.column(0).iter().chain(m.column(1).iter()).all(|v| *v > 0.1));
        }
    }

    #[test]
    fn fields_are_deterministic_and_have_background() {
        let a = TissueField::generate(64, 64, 3);
        let b = TissueField::generate(64, 64, 3);
        assert_eq!(a.conc, b.conc);
        let empty = a.conc.iter().filter(|c| c[0] == 0.0 && c[1] == 0.0).count();
        assert!(empty > 0 && empty < 64 * 64 / 2, "{empty}");
    }
}
