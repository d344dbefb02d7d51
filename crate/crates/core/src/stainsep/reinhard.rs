use crate::imaging::{lab_to_rgb, rgb_to_lab, ImageTile, Pixels3};

use super::{StainError, TemplateStats};

const MIN_STD: f64 = 1e-8;

fn channel_stats(lab: &Pixels3) -> ([f64; 3], [f64; 3]) {
    let n = lab.len() as f64;
    let mut mean = [0.0; 3];
    for p in &lab.data {
        for c in 0..3 {
            mean[c] += p[c];
        }
    }
    mean = mean.map(|m| m / n);
    let mut var = [0.0; 3];
    for p in &lab.data {
        for c in 0..3 {
            var[c] += (p[c] - mean[c]).powi(2);
        }
    }
    (mean, var.map(|v| (v / n).sqrt()))
}

/// Mean and (population) standard deviation of each lαβ channel of the template.
pub fn reinhard_fit(template: &ImageTile) -> Result<TemplateStats, StainError> {
    let (mean, std) = channel_stats(&rgb_to_lab(template));
    if let Some(channel) = (0..3).find(|&c| std[c] < MIN_STD) {
        return Err(StainError::DegenerateTemplate { channel, std: std[channel] });
    }
    Ok(TemplateStats { mean, std })
}

/// lαβ result of a Reinhard transfer before conversion back to RGB.
#[derive(Clone, Debug)]
pub struct ReinhardTransfer {
    pub lab: Pixels3,
    /// Channels whose source std was below 1e-8; only the mean was shifted.
    pub degenerate_channels: [bool; 3],
}

/// `out = (in − μ_src)·σ_tpl/σ_src + μ_tpl` per lαβ channel.
pub fn reinhard_transfer_lab(tile: &ImageTile, stats: &TemplateStats) -> ReinhardTransfer {
    let mut lab = rgb_to_lab(tile);
    let (mean, std) = channel_stats(&lab);
    let degenerate = [0, 1, 2].map(|c| std[c] < MIN_STD);
    let scale = [0, 1, 2].map(|c| if degenerate[c] { 1.0 } else { stats.std[c] / std[c] });
    for p in &mut lab.data {
        for c in 0..3 {
            p[c] = (p[c] - mean[c]) * scale[c] + stats.mean[c];
        }
    }
    ReinhardTransfer { lab, degenerate_channels: degenerate }
}

/// Reinhard color transfer toward the template statistics, clamped to `[0, 1]`.
pub fn reinhard_apply(tile: &ImageTile, stats: &TemplateStats) -> ImageTile {
    let transfer = reinhard_transfer_lab(tile, stats);
    let mut out = lab_to_rgb(&transfer.lab).expect("same dimensions as the input");
    out.meta = tile.meta.clone();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::rgb_to_lab;

    fn textured() -> ImageTile {
        ImageTile::from_fn(16, 16, |x, y| {
            let t = ((x * 7 + y * 3) % 16) as f32 / 16.0;
            [0.4 + 0.5 * t, 0.2 + 0.4 * (1.0 - t), 0.5 + 0.3 * ((x % 4) as f32 / 4.0)]
        })
        .unwrap()
    }

    #[test]
    fn constant_template_is_degenerate() {
        let t = ImageTile::filled(8, 8, [0.7, 0.3, 0.5]).unwrap();
        assert!(matches!(reinhard_fit(&t), Err(StainError::DegenerateTemplate { .. })));
    }

    #[test]
    fn two_pixel_template_by_hand() {
        let a = [0.8f32, 0.4, 0.6];
        let b = [0.3f32, 0.5, 0.2];
        let t = ImageTile::new(2, 1, [a, b].concat()).unwrap();
        let stats = reinhard_fit(&t).unwrap();
        let la = rgb_to_lab(&ImageTile::new(1, 1, a.to_vec()).unwrap()).data[0];
        let lb = rgb_to_lab(&ImageTile::new(1, 1, b.to_vec()).unwrap()).data[0];
        for c in 0..3 {
            assert!((stats.mean[c] - (la[c] + lb[c]) / 2.0).abs() < 1e-12);
            assert!((stats.std[c] - (la[c] - lb[c]).abs() / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fit_is_permutation_invariant() {
        let t = textured();
        let mut px: Vec<[f32; 3]> = t.iter_rgb().collect();
        px.reverse();
        px.rotate_left(37);
        let shuffled = ImageTile::new(16, 16, px.concat()).unwrap();
        let (a, b) = (reinhard_fit(&t).unwrap(), reinhard_fit(&shuffled).unwrap());
        for c in 0..3 {
            assert!((a.mean[c] - b.mean[c]).abs() < 1e-12 && (a.std[c] - b.std[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn self_transfer_is_identity() {
        let t = textured();
        let out = reinhard_apply(&t, &reinhard_fit(&t).unwrap());
        assert!(out.max_abs_diff(&t) < 2e-3);
    }

    #[test]
    fn transferred_statistics_match_template() {
        let template = ImageTile::from_fn(10, 10, |x, y| [0.9 - 0.05 * x as f32, 0.3 + 0.04 * y as f32, 0.6]).unwrap();
        let stats = reinhard_fit(&template).unwrap();
        let transfer = reinhard_transfer_lab(&textured(), &stats);
        let (mean, std) = channel_stats(&transfer.lab);
        for c in 0..3 {
            assert!((mean[c] - stats.mean[c]).abs() < 1e-4);
            assert!((std[c] - stats.std[c]).abs() < 1e-4);
        }
    }

    #[test]
    fn hand_computed_two_by_two() {
        // Source lαβ values are standardized then mapped onto the template's
        // two-pixel statistics; each output must be μ_tpl ± σ_tpl·z.
        let tile = ImageTile::new(2, 2, [[0.2f32, 0.4, 0.6], [0.6, 0.4, 0.2], [0.3, 0.3, 0.3], [0.5, 0.6, 0.7]].concat()).unwrap();
        let template = ImageTile::new(2, 1, [[0.8f32, 0.3, 0.5], [0.4, 0.6, 0.5]].concat()).unwrap();
        let stats = reinhard_fit(&template).unwrap();
        let src = rgb_to_lab(&tile);
        let transfer = reinhard_transfer_lab(&tile, &stats);
        for c in 0..3 {
            let vals: Vec<f64> = src.data.iter().map(|p| p[c]).collect();
            let m = vals.iter().sum::<f64>() / 4.0;
            let s = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 4.0).sqrt();
            for (i, v) in vals.iter().enumerate() {
                let expected = (v - m) / s * stats.std[c] + stats.mean[c];
                assert!((transfer.lab.data[i][c] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_source_only_shifts_mean() {
        let tile = ImageTile::filled(4, 4, [0.5, 0.4, 0.3]).unwrap();
        let stats = reinhard_fit(&textured()).unwrap();
        let transfer = reinhard_transfer_lab(&tile, &stats);
        assert_eq!(transfer.degenerate_channels, [true; 3]);
        for c in 0..3 {
            assert!((transfer.lab.data[0][c] - stats.mean[c]).abs() < 1e-12);
        }
    }
}
