mod common;

use common::grid_residual;
use multistain::imaging::{rgb_to_od, ImageTile};
use multistain::stainsep::solver::{nn_lasso2, residual2};
use multistain::stainsep::{
    macenko_apply, macenko_fit, reinhard_apply, reinhard_fit, stain_concentrations, vahadane_apply, vahadane_fit,
    MacenkoParams, ModelDocument, NormalizerMethod, StainError, VahadaneParams,
};
use multistain::synthetic::{
    mixture_concentrations, random_stain_model, render_concentrations, stain_mixture_tile, Palette, TissueField,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;

fn permuted(tile: &ImageTile, seed: u64) -> ImageTile {
    let mut px: Vec<[f32; 3]> = tile.iter_rgb().collect();
    px.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
    ImageTile::new(tile.width(), tile.height(), px.concat()).unwrap()
}

#[test]
fn grid_oracle_agrees_with_exact_search() {
    // The pruned scan equals a full scan on a coarse grid.
    let m = random_stain_model(3);
    let od = [0.4, 0.9, 0.5];
    let step = 0.01;
    let mut full = f64::INFINITY;
    for i in 0..=300 {
        for j in 0..=300 {
            full = full.min(residual2(od, m.hematoxylin(), m.eosin(), [i as f64 * step, j as f64 * step]));
        }
    }
    assert!((grid_residual(od, &m, step, 3.0) - full.sqrt()).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solver_residual_is_minimal_over_the_nonnegative_grid(
        seed in 0u64..10_000,
        od in proptest::array::uniform3(0.0f64..2.0),
    ) {
        let m = random_stain_model(seed);
        let c = nn_lasso2(od, m.hematoxylin(), m.eosin(), 0.0);
        prop_assert!(c[0] >= 0.0 && c[1] >= 0.0);
        let ours = residual2(od, m.hematoxylin(), m.eosin(), c).sqrt();
        let grid = grid_residual(od, &m, 1e-3, 4.0);
        prop_assert!(ours <= grid + 1e-12, "solver {ours} worse than grid {grid}");
        prop_assert!(grid - ours <= 1e-3, "grid {grid} vs solver {ours}");
    }

    #[test]
    fn macenko_fit_is_pixel_permutation_invariant(seed in 0u64..1000, perm in 0u64..1000) {
        let tile = TissueField::generate(32, 32, seed).render(&Palette::source());
        let p = MacenkoParams::default();
        match (macenko_fit(&tile, &p), macenko_fit(&permuted(&tile, perm), &p)) {
            (Ok(a), Ok(b)) => {
                for k in 0..2 {
                    for r in 0..3 {
                        prop_assert!((a.stain_matrix[r][k] - b.stain_matrix[r][k]).abs() < 1e-9);
                    }
                    prop_assert!((a.max_concentrations[k] - b.max_concentrations[k]).abs() < 1e-9);
                }
            }
            (Err(a), Err(b)) => prop_assert_eq!(a.kind(), b.kind()),
            _ => prop_assert!(false, "fit succeeded on only one ordering"),
        }
    }

    #[test]
    fn reinhard_fit_is_pixel_permutation_invariant(seed in 0u64..1000, perm in 0u64..1000) {
        let tile = TissueField::generate(24, 24, seed).render(&Palette::unseen());
        let a = reinhard_fit(&tile).unwrap();
        let b = reinhard_fit(&permuted(&tile, perm)).unwrap();
        for c in 0..3 {
            prop_assert!((a.mean[c] - b.mean[c]).abs() < 1e-12);
            prop_assert!((a.std[c] - b.std[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn fitted_models_satisfy_column_invariants(seed in 0u64..1000) {
        let tile = TissueField::generate(32, 32, seed).render(&Palette::target());
        for m in [
            macenko_fit(&tile, &MacenkoParams::default()).unwrap(),
            vahadane_fit(&tile, &VahadaneParams::default()).unwrap().model,
        ] {
            m.validate().unwrap();
            for k in 0..2 {
                let col = m.column(k);
                prop_assert!(col.iter().all(|v| *v >= 0.0));
                prop_assert!((col.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs() <= 1e-6);
            }
        }
    }
}

#[test]
fn concentrations_recover_the_synthesis() {
    let truth = random_stain_model(17);
    let conc = mixture_concentrations(24, 24, 4);
    let tile = render_concentrations(&truth, 24, 24, &conc);
    let got = stain_concentrations(&tile, &truth).unwrap();
    let worst = got.data.iter().zip(&conc).flat_map(|(a, b)| [(a[0] - b[0]).abs(), (a[1] - b[1]).abs()]).fold(0.0, f64::max);
    assert!(worst < 0.02, "{worst}");
    assert!(got.data.iter().all(|c| c[0] >= 0.0 && c[1] >= 0.0));
}

#[test]
fn macenko_transfer_lands_in_the_template_span() {
    let src = random_stain_model(1);
    let tpl = random_stain_model(2);
    let tile = render_concentrations(&src, 24, 24, &mixture_concentrations(24, 24, 8));
    let out = macenko_apply(&tile, &src, &tpl).unwrap();
    let od = rgb_to_od(&out, tpl.background_intensity).unwrap();
    for p in &od.data {
        // Quantization to 8 bits leaves about 1/255 of slack in intensity.
        let c = nn_lasso2(*p, tpl.hematoxylin(), tpl.eosin(), 0.0);
        let r = residual2(*p, tpl.hematoxylin(), tpl.eosin(), c).sqrt();
        let scale = p.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
        assert!(r <= 1e-3 * scale || r < 2e-2, "residual {r} for {p:?}");
    }
}

#[test]
fn vahadane_objective_never_increases() {
    for seed in 0..5 {
        let tile = TissueField::generate(32, 32, seed).render(&Palette::source());
        let fit = vahadane_fit(&tile, &VahadaneParams::default()).unwrap();
        for w in fit.objective.windows(2) {
            assert!(w[1] <= w[0], "{} -> {}", w[0], w[1]);
        }
    }
}

/// Worst per-channel difference over tissue pixels the model can represent,
/// plus the fraction of tissue pixels that fall outside its stain cone.
fn in_cone_error(tile: &ImageTile, out: &ImageTile, model: &multistain::stainsep::StainModel) -> (f32, f64) {
    let od = rgb_to_od(tile, model.background_intensity).unwrap();
    let (mut worst, mut tissue, mut outside) = (0f32, 0usize, 0usize);
    for ((a, b), p) in tile.iter_rgb().zip(out.iter_rgb()).zip(&od.data) {
        if !p.iter().all(|v| *v >= 0.15) {
            continue;
        }
        tissue += 1;
        let c = nn_lasso2(*p, model.hematoxylin(), model.eosin(), 0.0);
        if residual2(*p, model.hematoxylin(), model.eosin(), c).sqrt() > 1e-3 {
            outside += 1;
            continue;
        }
        worst = worst.max((0..3).map(|k| (a[k] - b[k]).abs()).fold(0.0, f32::max));
    }
    (worst, outside as f64 / tissue.max(1) as f64)
}

fn worst_tissue_error(tile: &ImageTile, out: &ImageTile) -> f32 {
    let od = rgb_to_od(tile, 240.0).unwrap();
    tile.iter_rgb()
        .zip(out.iter_rgb())
        .zip(&od.data)
        .filter(|(_, p)| p.iter().all(|v| *v >= 0.15))
        .map(|((a, b), _)| (0..3).map(|k| (a[k] - b[k]).abs()).fold(0.0, f32::max))
        .fold(0.0, f32::max)
}

#[test]
fn self_transfer_is_identity_on_two_stain_mixtures() {
    for seed in 0..5 {
        let tile = stain_mixture_tile(&random_stain_model(seed), 32, 32, 50 + seed);
        let stats = reinhard_fit(&tile).unwrap();
        assert!(reinhard_apply(&tile, &stats).max_abs_diff(&tile) <= 2e-3);
        let m = macenko_fit(&tile, &MacenkoParams::default()).unwrap();
        assert!(worst_tissue_error(&tile, &macenko_apply(&tile, &m, &m).unwrap()) <= 2.0 / 255.0);
        let vp = VahadaneParams::default();
        let v = vahadane_fit(&tile, &vp).unwrap().model;
        let out = vahadane_apply(&tile, &v, &v, vp.concentration_lambda).unwrap();
        assert!(worst_tissue_error(&tile, &out) <= 3.0 / 255.0);
    }
}

#[test]
fn self_transfer_on_tissue_fields_is_exact_inside_the_stain_cone() {
    for seed in 0..5 {
        let tile = TissueField::generate(32, 32, 40 + seed).render(&Palette::target());
        let stats = reinhard_fit(&tile).unwrap();
        assert!(reinhard_apply(&tile, &stats).max_abs_diff(&tile) <= 2e-3);

        let m = macenko_fit(&tile, &MacenkoParams::default()).unwrap();
        let (worst, outside) = in_cone_error(&tile, &macenko_apply(&tile, &m, &m).unwrap(), &m);
        assert!(worst <= 2.0 / 255.0 && outside < 0.05, "{worst} {outside}");

        // The sparse dictionary sits inside the data cone, so many pixels are
        // clipped; only the representable ones are held to the bound.
        let vp = VahadaneParams::default();
        let v = vahadane_fit(&tile, &vp).unwrap().model;
        let out = vahadane_apply(&tile, &v, &v, vp.concentration_lambda).unwrap();
        let (worst, _) = in_cone_error(&tile, &out, &v);
        assert!(worst <= 3.0 / 255.0, "{worst}");
    }
}

#[test]
fn background_stays_white_after_transfer() {
    let src = random_stain_model(5);
    let tpl = random_stain_model(6);
    let tile = render_concentrations(&src, 24, 24, &mixture_concentrations(24, 24, 2));
    let od = rgb_to_od(&tile, 240.0).unwrap();
    for out in [macenko_apply(&tile, &src, &tpl).unwrap(), vahadane_apply(&tile, &src, &tpl, 0.01).unwrap()] {
        for (p, o) in od.data.iter().zip(out.iter_rgb()) {
            if p.iter().all(|v| *v < 0.02) {
                assert!(o.iter().all(|v| *v >= 0.9), "{o:?}");
            }
        }
    }
}

#[test]
fn degenerate_inputs_fail_cleanly() {
    let flat = ImageTile::filled(16, 16, [0.7, 0.4, 0.6]).unwrap();
    assert!(matches!(reinhard_fit(&flat), Err(StainError::DegenerateTemplate { .. })));
    let white = ImageTile::filled(16, 16, [1.0; 3]).unwrap();
    assert_eq!(macenko_fit(&white, &MacenkoParams::default()).unwrap_err().kind(), "InsufficientTissue");
    assert_eq!(vahadane_fit(&white, &VahadaneParams::default()).unwrap_err().kind(), "InsufficientTissue");
}

#[test]
fn model_documents_roundtrip_with_schema_version() {
    let tile = TissueField::generate(32, 32, 3).render(&Palette::target());
    let docs = [
        ModelDocument::reinhard(reinhard_fit(&tile).unwrap()),
        ModelDocument::stain(NormalizerMethod::Macenko, macenko_fit(&tile, &MacenkoParams::default()).unwrap()),
    ];
    for doc in docs {
        let text = doc.to_json();
        assert!(text.contains("\"schema_version\": 1"));
        assert_eq!(ModelDocument::from_json(&text).unwrap(), doc);
    }
    assert!(ModelDocument::from_json(r#"{"schema_version":2,"method":"reinhard"}"#).is_err());
    assert!(ModelDocument::from_json(r#"{"schema_version":1,"method":"macenko","extra":1}"#).is_err());
}
