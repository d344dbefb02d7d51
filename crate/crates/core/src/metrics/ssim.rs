use super::MetricsError;
use crate::imaging::ImageTile;

/// Side of the uniform SSIM window.
pub const SSIM_WINDOW: usize = 7;

/// Mean structural similarity over every valid 7×7 window of every channel.
///
/// Uses uniform windows, sample (`n − 1`) variances and
/// `C1 = (0.01·L)²`, `C2 = (0.03·L)²` for data range `L`. Each window is
/// evaluated directly in two passes, with the same expressions for both
/// images, so identical inputs score exactly 1.
pub fn ssim(x: &ImageTile, y: &ImageTile, data_range: f64) -> Result<f64, MetricsError> {
    if x.width() != y.width() || x.height() != y.height() {
        return Err(MetricsError::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            x.width(),
            x.height(),
            y.width(),
            y.height()
        )));
    }
    let (w, h) = (x.width(), x.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(MetricsError::WindowTooLarge { window: SSIM_WINDOW, width: w, height: h });
    }
    let c1 = (0.01 * data_range).powi(2);
    let c2 = (0.03 * data_range).powi(2);
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let (xp, yp) = (x.pixels(), y.pixels());
    let mut total = 0.0;
    let mut count = 0usize;
    let mut wa = [0.0f64; SSIM_WINDOW * SSIM_WINDOW];
    let mut wb = [0.0f64; SSIM_WINDOW * SSIM_WINDOW];
    for c in 0..3 {
        for oy in 0..=h - SSIM_WINDOW {
            for ox in 0..=w - SSIM_WINDOW {
                for dy in 0..SSIM_WINDOW {
                    for dx in 0..SSIM_WINDOW {
                        let i = ((oy + dy) * w + ox + dx) * 3 + c;
                        wa[dy * SSIM_WINDOW + dx] = xp[i] as f64;
                        wb[dy * SSIM_WINDOW + dx] = yp[i] as f64;
                    }
                }
                let mx = wa.iter().sum::<f64>() / n;
                let my = wb.iter().sum::<f64>() / n;
                let mut vx = 0.0;
                let mut vy = 0.0;
                let mut cov = 0.0;
                for (a, b) in wa.iter().zip(&wb) {
                    let (da, db) = (a - mx, b - my);
                    vx += da * da;
                    vy += db * db;
                    cov += da * db;
                }
                let (vx, vy, cov) = (vx / (n - 1.0), vy / (n - 1.0), cov / (n - 1.0));
                let num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
                let den = (mx * mx + my * my + c1) * (vx + vy + c2);
                total += num / den;
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}
