//! SSIM and FID between sets of tiles from different palettes, using the
//! seeded random feature encoder.
//!
//! cargo run --release --example evaluate_metrics

use multistain::metrics::{fid_between_sets, frechet_distance, ssim, EncoderSpec, FeatureGaussian};
use multistain::synthetic::{Palette, TissueField};
use nalgebra::{DMatrix, DVector};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let field = TissueField::generate(64, 64, 3);
    let target = field.render(&Palette::target());
    for p in [Palette::target(), Palette::source(), Palette::unseen()] {
        println!("ssim(target, {:<6}) = {:.4}", p.name, ssim(&target, &field.render(&p), 1.0)?);
    }

    let spec = EncoderSpec::SeededRandom { feature_dim: 32, seed: 1 };
    let reference = Palette::target().tiles(64, 100, 0);
    for (p, first) in [(Palette::target(), 1_000), (Palette::source(), 2_000), (Palette::unseen(), 3_000)] {
        let r = fid_between_sets(&spec, &reference, &p.tiles(64, 100, first))?;
        println!("fid(target, {:<6}) = {:.4}  (n = {}/{}, d = {})", p.name, r.fid, r.n_ref, r.n_cand, r.feature_dim);
    }

    let a = FeatureGaussian { mean: DVector::from_element(1, 0.0), covariance: DMatrix::from_element(1, 1, 1.0), sample_count: 0 };
    let b = FeatureGaussian { mean: DVector::from_element(1, 1.0), covariance: DMatrix::from_element(1, 1, 4.0), sample_count: 0 };
    println!("frechet(N(0,1), N(1,4)) = {}", frechet_distance(&a, &b)?);
    Ok(())
}
