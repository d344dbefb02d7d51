//! Fits the three template normalizers to a target-palette tile and applies
//! them to a tile of a different staining.
//!
//! cargo run --release --example stain_baselines

use multistain::metrics::ssim;
use multistain::stainsep::{
    macenko_apply, macenko_fit, reinhard_apply, reinhard_fit, vahadane_apply, vahadane_fit, MacenkoParams,
    VahadaneParams,
};
use multistain::synthetic::{Palette, TissueField};

fn mean_rgb(t: &multistain::imaging::ImageTile) -> [f64; 3] {
    let mut m = [0.0; 3];
    for p in t.iter_rgb() {
        for c in 0..3 {
            m[c] += p[c] as f64 / t.pixel_count() as f64;
        }
    }
    m
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let template = TissueField::generate(128, 128, 1).render(&Palette::target());
    let field = TissueField::generate(128, 128, 2);
    let source = field.render(&Palette::source());
    let truth = field.render(&Palette::target());

    let stats = reinhard_fit(&template)?;
    let mp = MacenkoParams::default();
    let vp = VahadaneParams::default();
    let m_template = macenko_fit(&template, &mp)?;
    let v_template = vahadane_fit(&template, &vp)?;
    println!("macenko H {:?}", m_template.hematoxylin().map(|v| (v * 1e3).round() / 1e3));
    println!("vahadane H {:?} (converged: {})", v_template.model.hematoxylin().map(|v| (v * 1e3).round() / 1e3), v_template.converged);

    let outputs = [
        ("reinhard", reinhard_apply(&source, &stats)),
        ("macenko", macenko_apply(&source, &macenko_fit(&source, &mp)?, &m_template)?),
        (
            "vahadane",
            vahadane_apply(&source, &vahadane_fit(&source, &vp)?.model, &v_template.model, vp.concentration_lambda)?,
        ),
    ];
    println!("{:<10} {:>8} {:>12} {:>24}", "method", "ssim", "|out-truth|", "mean rgb");
    println!("{:<10} {:>8.4} {:>12.4} {:>24}", "input", 1.0, source.mean_abs_diff(&truth), format!("{:.3?}", mean_rgb(&source)));
    for (name, out) in &outputs {
        println!(
            "{:<10} {:>8.4} {:>12.4} {:>24}",
            name,
            ssim(&source, out, 1.0)?,
            out.mean_abs_diff(&truth),
            format!("{:.3?}", mean_rgb(out))
        );
    }
    println!("target mean rgb {:.3?}", mean_rgb(&truth));
    Ok(())
}
