//! im2col-based convolution kernels for a single sample.

use super::real::{gemm, Real};

/// Geometry of a 2-D convolution over a `channels×height×width` image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeometry {
    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.pad - self.kernel) / self.stride + 1
    }

    /// Rows of the column matrix: `channels·k·k`.
    pub fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    /// Columns of the column matrix: output positions.
    pub fn col_cols(&self) -> usize {
        self.out_height() * self.out_width()
    }

    pub fn valid(&self) -> bool {
        self.height + 2 * self.pad >= self.kernel && self.width + 2 * self.pad >= self.kernel && self.stride > 0
    }
}

/// Unfolds image patches: row `c·k² + ki·k + kj`, column `oy·Wo + ox`.
pub fn im2col<T: Real>(g: &ConvGeometry, image: &[T], cols: &mut [T]) {
    let (ho, wo) = (g.out_height(), g.out_width());
    let p = ho * wo;
    let k = g.kernel;
    for c in 0..g.channels {
        let plane = &image[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let out = &mut cols[row * p..(row + 1) * p];
                for oy in 0..ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let dst = &mut out[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= g.height as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *d = if ix < 0 || ix >= g.width as isize { T::zero() } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates column entries back into the image.
pub fn col2im<T: Real>(g: &ConvGeometry, cols: &[T], image: &mut [T]) {
    let (ho, wo) = (g.out_height(), g.out_width());
    let p = ho * wo;
    let k = g.kernel;
    for c in 0..g.channels {
        let plane = &mut image[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for ox in 0..wo {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && (ix as usize) < g.width {
                            dst[ix as usize] = dst[ix as usize] + src[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
}

/// `out (Cout×P) = W (Cout×K) · cols (K×P) + b`; `cols` is filled from `x`.
pub fn conv_forward<T: Real>(g: &ConvGeometry, x: &[T], w: &[T], b: Option<&[T]>, cout: usize, cols: &mut [T], out: &mut [T]) {
    im2col(g, x, cols);
    let (kk, p) = (g.col_rows(), g.col_cols());
    gemm(cout, kk, p, w, false, cols, false, out, false);
    if let Some(b) = b {
        for (c, row) in out.chunks_exact_mut(p).enumerate() {
            for v in row {
                *v = *v + b[c];
            }
        }
    }
}

/// Gradients of [`conv_forward`] given the cached column matrix.
#[allow(clippy::too_many_arguments)]
pub fn conv_backward<T: Real>(
    g: &ConvGeometry,
    cols: &[T],
    w: &[T],
    cout: usize,
    dy: &[T],
    dx: Option<&mut [T]>,
    dw: Option<&mut [T]>,
    db: Option<&mut [T]>,
    scratch: &mut Vec<T>,
) {
    let (kk, p) = (g.col_rows(), g.col_cols());
    if let Some(dw) = dw {
        gemm(cout, p, kk, dy, false, cols, true, dw, true);
    }
    if let Some(db) = db {
        for (c, row) in dy.chunks_exact(p).enumerate() {
            db[c] = db[c] + row.iter().copied().sum::<T>();
        }
    }
    if let Some(dx) = dx {
        scratch.clear();
        scratch.resize(kk * p, T::zero());
        gemm(kk, cout, p, w, true, dy, false, scratch, false);
        col2im(g, scratch, dx);
    }
}

/// Transposed convolution of one sample. `g` describes the convolution whose
/// adjoint this is: its image is the output (`Cout×Hout×Wout`) and its output
/// positions are the input pixels. `w` is `Cin×(Cout·k²)`.
#[allow(clippy::too_many_arguments)]
pub fn conv_t_forward<T: Real>(
    g: &ConvGeometry,
    x: &[T],
    w: &[T],
    b: Option<&[T]>,
    cin: usize,
    scratch: &mut Vec<T>,
    out: &mut [T],
) {
    let (kk, p) = (g.col_rows(), g.col_cols());
    scratch.clear();
    scratch.resize(kk * p, T::zero());
    gemm(kk, cin, p, w, true, x, false, scratch, false);
    out.fill(T::zero());
    col2im(g, scratch, out);
    if let Some(b) = b {
        let plane = g.height * g.width;
        for (c, row) in out.chunks_exact_mut(plane).enumerate() {
            for v in row {
                *v = *v + b[c];
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn conv_t_backward<T: Real>(
    g: &ConvGeometry,
    x: &[T],
    w: &[T],
    cin: usize,
    dy: &[T],
    dx: Option<&mut [T]>,
    dw: Option<&mut [T]>,
    db: Option<&mut [T]>,
    scratch: &mut Vec<T>,
) {
    let (kk, p) = (g.col_rows(), g.col_cols());
    if let Some(db) = db {
        let plane = g.height * g.width;
        for (c, row) in dy.chunks_exact(plane).enumerate() {
            db[c] = db[c] + row.iter().copied().sum::<T>();
        }
    }
    if dx.is_none() && dw.is_none() {
        return;
    }
    scratch.clear();
    scratch.resize(kk * p, T::zero());
    im2col(g, dy, scratch);
    if let Some(dx) = dx {
        gemm(cin, kk, p, w, false, scratch, false, dx, true);
    }
    if let Some(dw) = dw {
        gemm(cin, p, kk, x, false, scratch, true, dw, true);
    }
}
