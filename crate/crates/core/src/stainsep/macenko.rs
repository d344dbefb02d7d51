use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::imaging::{intensity_from_od, rgb_to_od, ImageTile, Pixels3, DEFAULT_BACKGROUND_INTENSITY};

use super::solver::{dot, nn_lasso2, percentile};
use super::{StainError, StainModel, MIN_TISSUE_PIXELS};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MacenkoParams {
    /// Percentile (in percent) of the angular extremes.
    pub alpha_percentile: f64,
    /// Pixels with any OD channel below this are discarded.
    pub beta_od_threshold: f64,
    pub background_intensity: f64,
}

impl Default for MacenkoParams {
    fn default() -> Self {
        Self { alpha_percentile: 1.0, beta_od_threshold: 0.15, background_intensity: DEFAULT_BACKGROUND_INTENSITY }
    }
}

/// Per-pixel stain concentrations, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Concentrations {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[f64; 2]>,
}

pub(crate) fn tissue_od(od: &Pixels3, beta: f64) -> Vec<[f64; 3]> {
    od.data.iter().copied().filter(|p| p.iter().all(|v| *v >= beta)).collect()
}

/// Flips `v` so its entries sum non-negative (a zero sum defers to the first
/// nonzero entry), then clamps residual negatives to zero.
pub(crate) fn orient_nonnegative(v: [f64; 3]) -> [f64; 3] {
    let s: f64 = v.iter().sum();
    let flip = if s != 0.0 { s < 0.0 } else { v.iter().find(|x| **x != 0.0).is_some_and(|x| *x < 0.0) };
    let v = if flip { v.map(|x| -x) } else { v };
    v.map(|x| x.max(0.0))
}

/// Estimates the stain matrix from the two leading right singular directions
/// of the tissue OD point cloud and the angular extremes within that plane.
pub fn macenko_fit(tile: &ImageTile, params: &MacenkoParams) -> Result<StainModel, StainError> {
    let od = rgb_to_od(tile, params.background_intensity)?;
    let tissue = tissue_od(&od, params.beta_od_threshold);
    if tissue.len() < MIN_TISSUE_PIXELS {
        return Err(StainError::InsufficientTissue { found: tissue.len(), required: MIN_TISSUE_PIXELS });
    }

    // Right singular vectors of the N×3 cloud are the eigenvectors of its Gram matrix.
    let mut gram = Matrix3::<f64>::zeros();
    for p in &tissue {
        for r in 0..3 {
            for c in 0..3 {
                gram[(r, c)] += p[r] * p[c];
            }
        }
    }
    if gram.iter().any(|v| !v.is_finite()) {
        return Err(StainError::NumericalFailure("non-finite OD Gram matrix".into()));
    }
    let eig = SymmetricEigen::try_new(gram, 1e-14, 10_000)
        .ok_or_else(|| StainError::NumericalFailure("SVD did not converge".into()))?;
    let mut order = [0usize, 1, 2];
    order.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]));
    let vec = |i: usize| {
        let c = eig.eigenvectors.column(order[i]);
        [c[0], c[1], c[2]]
    };
    let mut v0 = vec(0);
    if v0.iter().sum::<f64>() < 0.0 {
        v0 = v0.map(|x| -x);
    }
    let v1 = vec(1);

    let mut angles: Vec<f64> = tissue.iter().map(|p| dot(*p, v1).atan2(dot(*p, v0))).collect();
    let min_phi = percentile(&mut angles, params.alpha_percentile);
    let max_phi = percentile(&mut angles, 100.0 - params.alpha_percentile);
    let direction = |phi: f64| orient_nonnegative([0, 1, 2].map(|i| v0[i] * phi.cos() + v1[i] * phi.sin()));
    let (a, b) = (direction(min_phi), direction(max_phi));
    if dot(a, a) == 0.0 || dot(b, b) == 0.0 {
        return Err(StainError::NumericalFailure("degenerate stain direction".into()));
    }

    let provisional = StainModel::from_columns(a, b, [1.0, 1.0], params.background_intensity);
    let conc = concentrations_with(&od, &provisional, 0.0);
    let stain_model = StainModel {
        max_concentrations: max_concentrations(&conc)?,
        ..provisional
    };
    Ok(stain_model)
}

pub(crate) fn max_concentrations(conc: &Concentrations) -> Result<[f64; 2], StainError> {
    let mut out = [0.0; 2];
    for (k, slot) in out.iter_mut().enumerate() {
        let mut v: Vec<f64> = conc.data.iter().map(|c| c[k]).collect();
        *slot = percentile(&mut v, 99.0);
    }
    if out.iter().any(|c| !(*c > 0.0)) {
        return Err(StainError::NumericalFailure("a stain has zero 99th-percentile concentration".into()));
    }
    Ok(out)
}

pub(crate) fn concentrations_with(od: &Pixels3, model: &StainModel, lambda: f64) -> Concentrations {
    let (h, e) = (model.hematoxylin(), model.eosin());
    Concentrations {
        width: od.width,
        height: od.height,
        data: od.data.iter().map(|p| nn_lasso2(*p, h, e, lambda)).collect(),
    }
}

/// Non-negative least squares fit of each pixel's OD onto the stain matrix.
pub fn stain_concentrations(tile: &ImageTile, model: &StainModel) -> Result<Concentrations, StainError> {
    let od = rgb_to_od(tile, model.background_intensity)?;
    Ok(concentrations_with(&od, model, 0.0))
}

/// Recombines concentrations (rescaled per stain) through the template's
/// stain matrix.
pub(crate) fn recompose(
    conc: &Concentrations,
    source: &StainModel,
    template: &StainModel,
    like: &ImageTile,
) -> ImageTile {
    let scale = [0, 1].map(|k| template.max_concentrations[k] / source.max_concentrations[k]);
    let (h, e) = (template.hematoxylin(), template.eosin());
    let i0 = template.background_intensity;
    let mut pixels = Vec::with_capacity(conc.data.len() * 3);
    for c in &conc.data {
        let (ch, ce) = (c[0] * scale[0], c[1] * scale[1]);
        for i in 0..3 {
            pixels.push(intensity_from_od(h[i] * ch + e[i] * ce, i0) as f32);
        }
    }
    let mut out = ImageTile::from_clamped(conc.width, conc.height, pixels).expect("dimensions preserved");
    out.meta = like.meta.clone();
    out
}

/// Macenko normalization of `tile` (described by `source`) toward `template`.
pub fn macenko_apply(tile: &ImageTile, source: &StainModel, template: &StainModel) -> Result<ImageTile, StainError> {
    source.validate()?;
    template.validate()?;
    let conc = stain_concentrations(tile, source)?;
    Ok(recompose(&conc, source, template, tile))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{stain_mixture_tile, reference_stain_model};

    #[test]
    fn white_tile_has_no_tissue() {
        let t = ImageTile::filled(32, 32, [1.0, 1.0, 1.0]).unwrap();
        assert!(matches!(
            macenko_fit(&t, &MacenkoParams::default()),
            Err(StainError::InsufficientTissue { found: 0, .. })
        ));
    }

    #[test]
    fn recovers_reference_stains() {
        let truth = reference_stain_model();
        let tile = stain_mixture_tile(&truth, 48, 48, 3);
        let fit = macenko_fit(&tile, &MacenkoParams::default()).unwrap();
        fit.validate().unwrap();
        for k in 0..2 {
            let cos = dot(fit.column(k), truth.column(k)).min(1.0);
            assert!(cos.acos() < 0.05, "stain {k}: {}", cos.acos());
        }
    }

    #[test]
    fn fit_is_permutation_invariant() {
        let tile = stain_mixture_tile(&reference_stain_model(), 40, 40, 9);
        let mut px: Vec<[f32; 3]> = tile.iter_rgb().collect();
        px.reverse();
        let flipped = ImageTile::new(40, 40, px.concat()).unwrap();
        let (a, b) = (
            macenko_fit(&tile, &MacenkoParams::default()).unwrap(),
            macenko_fit(&flipped, &MacenkoParams::default()).unwrap(),
        );
        for r in 0..3 {
            for k in 0..2 {
                assert!((a.stain_matrix[r][k] - b.stain_matrix[r][k]).abs() < 1e-9);
            }
        }
        for k in 0..2 {
            assert!((a.max_concentrations[k] - b.max_concentrations[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn white_pixel_has_zero_concentration() {
        let t = ImageTile::filled(2, 2, [1.0, 1.0, 1.0]).unwrap();
        let c = stain_concentrations(&t, &reference_stain_model()).unwrap();
        assert!(c.data.iter().all(|c| *c == [0.0, 0.0]));
    }

    #[test]
    fn self_transfer_and_background() {
        let tile = stain_mixture_tile(&reference_stain_model(), 40, 40, 21);
        let model = macenko_fit(&tile, &MacenkoParams::default()).unwrap();
        let out = macenko_apply(&tile, &model, &model).unwrap();
        let od = rgb_to_od(&tile, 240.0).unwrap();
        for (i, p) in od.data.iter().enumerate() {
            let a = tile.iter_rgb().nth(i).unwrap();
            let b = out.iter_rgb().nth(i).unwrap();
            if p.iter().all(|v| *v >= 0.15) {
                for c in 0..3 {
                    assert!((a[c] - b[c]).abs() <= 2.0 / 255.0, "pixel {i}: {a:?} vs {b:?}");
                }
            }
            if p.iter().all(|v| *v < 0.02) {
                assert!(b.iter().all(|v| *v >= 0.9));
            }
        }
    }

    #[test]
    fn orient_prefers_positive() {
        assert_eq!(orient_nonnegative([-0.5, -0.5, 0.1]), [0.5, 0.5, 0.0]);
        assert_eq!(orient_nonnegative([-0.5, 0.5, 0.0]), [0.5, 0.0, 0.0]);
    }
}
