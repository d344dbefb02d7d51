//! Drives the command line in-process through a full pipeline on synthetic
//! data: tiles → fit → normalize → eval → report.
//!
//! cargo run --release --example cli_pipeline -- [work_dir]

use multistain::imaging::io::write_png;
use multistain::synthetic::{Palette, TissueField};

fn cli(args: &[&str]) -> i32 {
    println!("$ multistain {}", args.join(" "));
    multistain::cli::run(std::iter::once("multistain").chain(args.iter().copied()))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let work = std::path::PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/cli_pipeline".into()));
    std::fs::create_dir_all(work.join("slides"))?;
    std::env::set_current_dir(&work)?;
    write_png(&TissueField::generate(320, 320, 1).render(&Palette::source()), "slides/center_b.png".as_ref())?;
    write_png(&TissueField::generate(128, 128, 2).render(&Palette::target()), "template.png".as_ref())?;
    std::fs::write("encoder.json", r#"{"kind":"seeded_random","feature_dim":16,"seed":7}"#)?;
    std::fs::write("classifier.json", r#"[{"kind":"classifier","label":"unnormalized","tumor_accuracy":{"mean":0.90,"std":0.005}},
        {"kind":"classifier","label":"macenko","tumor_accuracy":{"mean":0.88,"std":0.01}}]"#)?;

    let steps: [&[&str]; 6] = [
        &["tiles", "--in", "slides", "--out", "tiles", "--tile", "64", "--tissue", "0.3", "--label", "CENTER_B"],
        &["fit", "--method", "macenko", "--template", "template.png", "--out", "macenko.json"],
        &["normalize", "--method", "macenko", "--model", "macenko.json", "--in", "tiles/tiles", "--out", "normalized"],
        &["eval", "fid", "--ref", "tiles/tiles", "--cand", "normalized", "--encoder", "encoder.json", "--out", "fid.json", "--label", "macenko"],
        &["eval", "ssim", "--pairs", "pairs.csv", "--out", "ssim.csv", "--label", "macenko"],
        &["report", "ssim.csv", "fid.json", "classifier.json", "--out", "report"],
    ];
    for (i, step) in steps.iter().enumerate() {
        if i == 4 {
            // Pair every tile with its normalized version.
            let manifest = std::fs::read_to_string("tiles/manifest.csv")?;
            let mut pairs = String::from("reference,candidate\n");
            for line in manifest.lines().skip(1) {
                let rel = line.split(',').nth(3).expect("tile_path column");
                let inner = rel.trim_start_matches("tiles/");
                pairs += &format!("tiles/{rel},normalized/{inner}\n");
            }
            std::fs::write("pairs.csv", pairs)?;
        }
        let code = cli(step);
        if code != 0 {
            return Err(format!("step exited with {code}").into());
        }
    }
    Ok(())
}
