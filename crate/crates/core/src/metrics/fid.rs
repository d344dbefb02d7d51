use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::encoder::Encoder;
use super::{EncoderSpec, MetricsError};
use crate::imaging::ImageTile;

/// Mean and unbiased covariance of a feature set.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureGaussian {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub sample_count: usize,
}

/// Sample mean and `(N − 1)`-normalized covariance of the rows of `features`.
pub fn fit_gaussian(features: &DMatrix<f64>) -> Result<FeatureGaussian, MetricsError> {
    let (n, d) = features.shape();
    if n < 2 {
        return Err(MetricsError::TooFewSamples { found: n, required: 2 });
    }
    let mean = DVector::from_fn(d, |c, _| features.column(c).sum() / n as f64);
    let mut centered = features.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let mut covariance = centered.transpose() * &centered / (n - 1) as f64;
    symmetrize(&mut covariance);
    Ok(FeatureGaussian { mean, covariance, sample_count: n })
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m = (&*m + t) * 0.5;
}

fn eigen(m: DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>, MetricsError> {
    SymmetricEigen::try_new(m, 1e-15, 100_000).ok_or_else(|| MetricsError::NumericalFailure("eigensolver did not converge".into()))
}

/// Principal square root of a symmetric positive semidefinite matrix, with
/// negative eigenvalues clamped to 0.
fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>, MetricsError> {
    let e = eigen(m.clone())?;
    let roots = e.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&e.eigenvectors * DMatrix::from_diagonal(&roots) * e.eigenvectors.transpose())
}

/// `‖μa − μb‖² + Tr(Ca + Cb − 2·(Ca·Cb)^½)`, clamped at 0.
///
/// The trace of `(Ca·Cb)^½` is evaluated as the trace of the square root of
/// the symmetric matrix `√Ca·Cb·√Ca`, which has the same eigenvalues as
/// `Ca·Cb` for any pair of covariances.
pub fn frechet_distance(a: &FeatureGaussian, b: &FeatureGaussian) -> Result<f64, MetricsError> {
    let d = a.mean.len();
    if b.mean.len() != d {
        return Err(MetricsError::DimensionMismatch(d, b.mean.len()));
    }
    let dm = (&a.mean - &b.mean).norm_squared();
    let sa = psd_sqrt(&a.covariance)?;
    let mut inner = &sa * &b.covariance * &sa;
    symmetrize(&mut inner);
    let tr_sqrt: f64 = eigen(inner)?.eigenvalues.iter().map(|v| v.max(0.0).sqrt()).sum();
    let value = dm + a.covariance.trace() + b.covariance.trace() - 2.0 * tr_sqrt;
    if !value.is_finite() {
        return Err(MetricsError::NumericalFailure("non-finite Fréchet distance".into()));
    }
    Ok(value.max(0.0))
}

/// FID with the sample counts that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidReport {
    pub fid: f64,
    pub n_ref: usize,
    pub n_cand: usize,
    pub feature_dim: usize,
    /// Set when either set has fewer tiles than feature dimensions, so its
    /// covariance is rank deficient.
    pub rank_deficient: bool,
}

/// Encodes both sets, fits a Gaussian to each and returns their Fréchet
/// distance. Each set needs at least `max(2, d/4)` tiles.
pub fn fid_between_sets(spec: &EncoderSpec, reference: &[ImageTile], candidate: &[ImageTile]) -> Result<FidReport, MetricsError> {
    let encoder = Encoder::from_spec(spec)?;
    let d = encoder.feature_dim();
    let required = 2.max(d / 4);
    for set in [reference, candidate] {
        if set.len() < required {
            return Err(MetricsError::TooFewSamples { found: set.len(), required });
        }
    }
    let ga = fit_gaussian(&encoder.encode(reference)?)?;
    let gb = fit_gaussian(&encoder.encode(candidate)?)?;
    Ok(FidReport {
        fid: frechet_distance(&ga, &gb)?,
        n_ref: reference.len(),
        n_cand: candidate.len(),
        feature_dim: d,
        rank_deficient: reference.len() < d || candidate.len() < d,
    })
}
