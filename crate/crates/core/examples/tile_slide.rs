//! Renders a synthetic slide region, cuts it into overlapping tiles, keeps
//! those with enough tissue and writes the manifest.
//!
//! cargo run --release --example tile_slide -- [out_dir]

use multistain::imaging::io::write_png;
use multistain::synthetic::{Palette, TissueField};
use multistain::tiling::{build_manifest, extract_tiles, tissue_fraction, SourceSpec, TileSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::path::PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/tile_slide".into()));
    let slide = TissueField::generate(448, 320, 5).render(&Palette::source());
    std::fs::create_dir_all(&out)?;
    let source_path = out.join("slide_a.png");
    write_png(&slide, &source_path)?;

    let spec = TileSpec { tile_px: 128, tissue_threshold: 0.4, ..Default::default() };
    println!("stride {} px, {} candidate tiles", spec.stride(false), extract_tiles(&slide, &spec)?.len());
    for t in extract_tiles(&slide, &spec)?.iter().take(4) {
        println!("  tile at ({:>3}, {:>3}) tissue {:.3}", t.x, t.y, tissue_fraction(&t.tile));
    }

    let sources = [SourceSpec { path: source_path, domain_label: "CENTER_A".into(), annotated: false }];
    let outcome = build_manifest(&sources, &spec, &out)?;
    println!("kept {} tiles, manifest at {}", outcome.manifest.rows.len(), outcome.manifest_path.display());
    Ok(())
}
