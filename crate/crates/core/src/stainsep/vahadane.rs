use serde::{Deserialize, Serialize};

use crate::imaging::{rgb_to_od, ImageTile, DEFAULT_BACKGROUND_INTENSITY};

use super::macenko::{concentrations_with, max_concentrations, recompose, tissue_od, Concentrations};
use super::solver::{nn_lasso2, norm};
use super::{macenko_fit, MacenkoParams, StainError, StainModel, MIN_TISSUE_PIXELS};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VahadaneParams {
    /// L1 weight of the dictionary-learning objective.
    pub sparsity_lambda: f64,
    pub iterations: usize,
    /// L1 weight used when estimating concentrations for transfer.
    pub concentration_lambda: f64,
    pub beta_od_threshold: f64,
    pub background_intensity: f64,
}

impl Default for VahadaneParams {
    fn default() -> Self {
        Self {
            sparsity_lambda: 0.1,
            iterations: 200,
            concentration_lambda: 0.01,
            beta_od_threshold: 0.15,
            background_intensity: DEFAULT_BACKGROUND_INTENSITY,
        }
    }
}

const CONVERGENCE_TOL: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct VahadaneFit {
    pub model: StainModel,
    /// False when the iteration cap was hit before the relative objective
    /// change fell below 1e-5. The model is still usable.
    pub converged: bool,
    pub iterations: usize,
    /// Objective after initialization and after every alternating iteration.
    pub objective: Vec<f64>,
}

fn objective(od: &[[f64; 3]], d: &[[f64; 3]; 2], c: &[[f64; 2]], lambda: f64) -> f64 {
    od.iter()
        .zip(c)
        .map(|(o, c)| {
            let r: f64 = (0..3).map(|i| (o[i] - d[0][i] * c[0] - d[1][i] * c[1]).powi(2)).sum();
            r + lambda * (c[0] + c[1])
        })
        .sum()
}

/// One projected gradient step on the dictionary with step `1/L`, projecting
/// each atom onto `{d ≥ 0, ‖d‖ ≤ 1}`, then rescaling atoms to unit norm while
/// shrinking the matching codes so `D·C` is unchanged.
fn dictionary_step(od: &[[f64; 3]], d: &mut [[f64; 3]; 2], c: &mut [[f64; 2]]) {
    let mut cct = [[0.0; 2]; 2];
    let mut oct = [[0.0; 2]; 3];
    for (o, c) in od.iter().zip(c.iter()) {
        for a in 0..2 {
            for b in 0..2 {
                cct[a][b] += c[a] * c[b];
            }
            for i in 0..3 {
                oct[i][a] += o[i] * c[a];
            }
        }
    }
    let tr = cct[0][0] + cct[1][1];
    let det = cct[0][0] * cct[1][1] - cct[0][1] * cct[1][0];
    let lmax = 0.5 * tr + (0.25 * tr * tr - det).max(0.0).sqrt();
    if !(lmax > 0.0) {
        return;
    }
    let step = 1.0 / (2.0 * lmax);
    let mut next = *d;
    for k in 0..2 {
        for i in 0..3 {
            let dcc: f64 = (0..2).map(|a| d[a][i] * cct[a][k]).sum();
            let grad = 2.0 * (dcc - oct[i][k]);
            next[k][i] = (d[k][i] - step * grad).max(0.0);
        }
        let n = norm(next[k]);
        if n > 1.0 {
            next[k] = next[k].map(|v| v / n);
        }
    }
    for k in 0..2 {
        let n = norm(next[k]);
        if n > 0.0 {
            d[k] = next[k].map(|v| v / n);
            for code in c.iter_mut() {
                code[k] *= n;
            }
        }
    }
}

/// Sparse non-negative dictionary learning of two stain atoms,
/// `min ‖OD − D·C‖²_F + λ‖C‖₁` with `D, C ≥ 0` and unit-norm atoms,
/// warm-started from the Macenko estimate of the same tile.
pub fn vahadane_fit(tile: &ImageTile, params: &VahadaneParams) -> Result<VahadaneFit, StainError> {
    let od_img = rgb_to_od(tile, params.background_intensity)?;
    let od = tissue_od(&od_img, params.beta_od_threshold);
    if od.len() < MIN_TISSUE_PIXELS {
        return Err(StainError::InsufficientTissue { found: od.len(), required: MIN_TISSUE_PIXELS });
    }
    let init = macenko_fit(
        tile,
        &MacenkoParams {
            beta_od_threshold: params.beta_od_threshold,
            background_intensity: params.background_intensity,
            ..MacenkoParams::default()
        },
    )?;
    let lambda = params.sparsity_lambda;
    let mut d = [init.hematoxylin(), init.eosin()];
    let code = |d: &[[f64; 3]; 2]| -> Vec<[f64; 2]> { od.iter().map(|o| nn_lasso2(*o, d[0], d[1], lambda)).collect() };

    let mut c = code(&d);
    let mut history = vec![objective(&od, &d, &c, lambda)];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.iterations {
        iterations += 1;
        let prev = *history.last().unwrap();
        let (d_prev, c_prev) = (d, c.clone());
        dictionary_step(&od, &mut d, &mut c);
        c = code(&d);
        let mut value = objective(&od, &d, &c, lambda);
        if !value.is_finite() {
            return Err(StainError::NumericalFailure("non-finite dictionary objective".into()));
        }
        if value > prev {
            // Rounding only; keep the previous iterate.
            d = d_prev;
            c = c_prev;
            value = prev;
        }
        history.push(value);
        if (prev - value).abs() <= CONVERGENCE_TOL * prev.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }

    let provisional = StainModel::from_columns(d[0], d[1], [1.0, 1.0], params.background_intensity);
    let conc = concentrations_with(&od_img, &provisional, params.concentration_lambda);
    let model = StainModel { max_concentrations: max_concentrations(&conc)?, ..provisional };
    Ok(VahadaneFit { model, converged, iterations, objective: history })
}

/// Sparse (non-negative lasso) concentrations of each pixel.
pub fn vahadane_concentrations(tile: &ImageTile, model: &StainModel, lambda: f64) -> Result<Concentrations, StainError> {
    let od = rgb_to_od(tile, model.background_intensity)?;
    Ok(concentrations_with(&od, model, lambda))
}

/// Vahadane normalization of `tile` (described by `source`) toward `template`.
pub fn vahadane_apply(
    tile: &ImageTile,
    source: &StainModel,
    template: &StainModel,
    concentration_lambda: f64,
) -> Result<ImageTile, StainError> {
    source.validate()?;
    template.validate()?;
    let conc = vahadane_concentrations(tile, source, concentration_lambda)?;
    Ok(recompose(&conc, source, template, tile))
}
