//! Projects tiles of three stainings into the grayscale intermediate domain
//! with the training jitter and writes a contact sheet of the results.
//!
//! cargo run --release --example intermediate_domain -- [out_dir]

use multistain::imaging::io::write_png;
use multistain::imaging::{augment_to_intermediate, rgb_to_grayscale3, ImageTile, JitterParams};
use multistain::synthetic::{Palette, TissueField};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::path::PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/intermediate_domain".into()));
    std::fs::create_dir_all(&out)?;
    let field = TissueField::generate(64, 64, 7);
    let params = JitterParams::training_default();
    let seeds = [11u64, 12, 13, 14];

    // Rows: palettes. Columns: original, plain grayscale, four jittered views.
    let palettes = [Palette::target(), Palette::source(), Palette::unseen()];
    let cols = 2 + seeds.len();
    let mut sheet = vec![1.0f32; 64 * cols * 64 * palettes.len() * 3];
    let stride = 64 * cols * 3;
    for (r, palette) in palettes.iter().enumerate() {
        let tile = field.render(palette);
        let mut row: Vec<ImageTile> = vec![tile.clone(), rgb_to_grayscale3(&tile)];
        for s in seeds {
            row.push(augment_to_intermediate(&tile, &params, s)?);
        }
        for (c, t) in row.iter().enumerate() {
            for y in 0..64 {
                for x in 0..64 {
                    let p = t.pixel(x, y);
                    let at = (r * 64 + y) * stride + (c * 64 + x) * 3;
                    sheet[at..at + 3].copy_from_slice(&p);
                }
            }
        }
        let gray_gap = rgb_to_grayscale3(&tile).mean_abs_diff(&rgb_to_grayscale3(&field.render(&Palette::target())));
        println!("{:<7} grayscale distance to target palette: {gray_gap:.4}", palette.name);
    }
    let sheet = ImageTile::new(64 * cols, 64 * palettes.len(), sheet)?;
    let path = out.join("contact_sheet.png");
    write_png(&sheet, &path)?;
    println!("wrote {}", path.display());
    Ok(())
}
