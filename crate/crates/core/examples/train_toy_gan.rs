//! Trains a small CycleGAN normalizer on two synthetic palettes at 64×64,
//! then normalizes held-out tiles of the training palette and of a palette
//! never seen in training.
//!
//! cargo run --release --example train_toy_gan -- [epochs] [out_dir]

use std::time::Instant;

use multistain::imaging::ImageTile;
use multistain::metrics::{fid_between_sets, ssim, EncoderSpec};
use multistain::msgan::{
    checkpoint, normalize_batch, train_epoch, Direction, DiscriminatorConfig, GanWeights, GeneratorConfig, TrainConfig,
};
use multistain::synthetic::Palette;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(8);
    let out = std::path::PathBuf::from(args.next().unwrap_or_else(|| "out/train_toy_gan".into()));

    let (target, source, unseen) = (Palette::target(), Palette::source(), Palette::unseen());
    let data_x = target.tiles(64, 500, 0);
    let data_y = source.tiles(64, 500, 100_000);
    let held_target = target.tiles(64, 100, 50_000);
    let held_source = source.tiles(64, 100, 70_000);
    let held_unseen = unseen.tiles(64, 100, 80_000);

    let generator = GeneratorConfig { depth: 4, innermost_filters: 32, input_size: 64, ..Default::default() };
    let discriminator = DiscriminatorConfig { base_filters: 8, ..Default::default() };
    let cfg = TrainConfig { learning_rate: 2e-4, total_epochs: epochs, decay_epochs: epochs / 2, rng_seed: 1, ..Default::default() };
    let mut w = GanWeights::init(generator, discriminator, cfg.buffer_size, cfg.adam, cfg.rng_seed)?;

    let start = Instant::now();
    for _ in 0..epochs {
        let r = train_epoch(&mut w, &data_x, &data_y, &cfg)?;
        println!(
            "epoch {:>2} [{:>5.1?}] cycle {:.4} idt {:.4} gan {:.3}/{:.3} d {:.3}/{:.3} d-updates {}/{}",
            r.epoch,
            start.elapsed(),
            r.cycle,
            r.idt_rec,
            r.gan_g,
            r.gan_f,
            r.d_x,
            r.d_y,
            r.d_x_updates,
            r.d_y_updates
        );
    }
    checkpoint::save(&out.join("checkpoint.msgan"), &w, Some(&cfg))?;

    let spec = EncoderSpec::SeededRandom { feature_dim: 32, seed: 1 };
    for (name, set) in [("source", &held_source), ("unseen", &held_unseen)] {
        let normalized = normalize_batch(&w, set, Direction::ToX)?;
        let mean_ssim = set.iter().zip(&normalized).map(|(a, b)| ssim(a, b, 1.0)).sum::<Result<f64, _>>()? / set.len() as f64;
        let before = fid_between_sets(&spec, set, &held_target)?.fid;
        let after = fid_between_sets(&spec, &normalized, &held_target)?.fid;
        println!("{name}: mean ssim {mean_ssim:.4}, fid to target {before:.4} -> {after:.4}");
    }
    let sample: Vec<ImageTile> = normalize_batch(&w, &held_unseen[..1], Direction::ToX)?;
    multistain::imaging::io::write_png(&sample[0], &out.join("unseen_normalized.png"))?;
    multistain::imaging::io::write_png(&held_unseen[0], &out.join("unseen_input.png"))?;
    println!("checkpoint and samples in {}", out.display());
    Ok(())
}
