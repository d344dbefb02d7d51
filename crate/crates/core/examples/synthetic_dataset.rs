//! Writes a synthetic dataset for trying the command line: tile folders for
//! the target, source and unseen palettes, a template per palette and two
//! larger "slide" images.
//!
//! cargo run --release --example synthetic_dataset -- [out_dir] [tiles_per_domain] [tile_px]

use multistain::imaging::io::write_png;
use multistain::synthetic::{Palette, TissueField};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = std::path::PathBuf::from(args.next().unwrap_or_else(|| "out/dataset".into()));
    let count: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(64);
    let size: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(64);

    for (i, palette) in [Palette::target(), Palette::source(), Palette::unseen()].iter().enumerate() {
        let dir = out.join(palette.name);
        std::fs::create_dir_all(&dir)?;
        for (k, tile) in palette.tiles(size, count, 10_000 * i as u64).iter().enumerate() {
            write_png(tile, &dir.join(format!("{k:04}.png")))?;
        }
        let template = TissueField::generate(128, 128, 999).render(palette);
        write_png(&template, &out.join(format!("template_{}.png", palette.name)))?;
    }
    let slides = out.join("slides");
    std::fs::create_dir_all(&slides)?;
    for (k, palette) in [Palette::source(), Palette::unseen()].iter().enumerate() {
        let slide = TissueField::generate(512, 384, 500 + k as u64).render(palette);
        write_png(&slide, &slides.join(format!("slide_{}.png", palette.name)))?;
    }
    println!("wrote {count} tiles per palette under {}", out.display());
    Ok(())
}
